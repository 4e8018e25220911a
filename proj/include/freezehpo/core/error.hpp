#pragma once

#include <stdexcept>
#include <string>

namespace freezehpo {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or arguments; the CLI maps it to exit status 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// An API was called out of order (e.g. backward without forward).
class UsageError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ProtocolError : public Error {
 public:
  using Error::Error;
};

}  // namespace freezehpo
