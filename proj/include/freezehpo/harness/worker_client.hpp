#pragma once

#include <fcntl.h>
#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "freezehpo/core/error.hpp"
#include "freezehpo/harness/protocol.hpp"
#include "freezehpo/scheduler/backend.hpp"

namespace freezehpo {

// Child process with its standard input and output connected to pipes.
// Standard error is inherited.
class Subprocess {
 public:
  explicit Subprocess(const std::vector<std::string>& argv) {
    if (argv.empty()) throw ConfigError("empty worker command");
    int to_child[2];
    int from_child[2];
    if (pipe(to_child) != 0) throw IoError(std::string("pipe: ") + std::strerror(errno));
    if (pipe(from_child) != 0) {
      close(to_child[0]);
      close(to_child[1]);
      throw IoError(std::string("pipe: ") + std::strerror(errno));
    }
    std::vector<char*> args;
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);
    pid_ = fork();
    if (pid_ < 0) throw IoError(std::string("fork: ") + std::strerror(errno));
    if (pid_ == 0) {
      dup2(to_child[0], STDIN_FILENO);
      dup2(from_child[1], STDOUT_FILENO);
      close(to_child[0]);
      close(to_child[1]);
      close(from_child[0]);
      close(from_child[1]);
      execvp(args[0], args.data());
      const std::string msg = std::string("exec ") + argv[0] + ": " + std::strerror(errno) + "\n";
      (void)!write(STDERR_FILENO, msg.data(), msg.size());
      _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    in_fd_ = to_child[1];
    out_fd_ = from_child[0];
    fcntl(in_fd_, F_SETFD, FD_CLOEXEC);
    fcntl(out_fd_, F_SETFD, FD_CLOEXEC);
  }

  Subprocess(const Subprocess&) = delete;
  Subprocess& operator=(const Subprocess&) = delete;

  ~Subprocess() {
    close_stdin();
    if (out_fd_ >= 0) close(out_fd_);
    wait();
  }

  void write_line(const std::string& line) {
    if (in_fd_ < 0) throw ProtocolError("worker input already closed");
    std::size_t off = 0;
    while (off < line.size()) {
      const ssize_t n = ::write(in_fd_, line.data() + off, line.size() - off);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) throw ProtocolError(std::string("worker write failed: ") + std::strerror(errno));
      off += static_cast<std::size_t>(n);
    }
  }

  // Next line without its newline; nullopt at EOF.
  std::optional<std::string> read_line() {
    for (;;) {
      const auto nl = buf_.find('\n');
      if (nl != std::string::npos) {
        std::string line = buf_.substr(0, nl);
        buf_.erase(0, nl + 1);
        return line;
      }
      char chunk[4096];
      const ssize_t n = ::read(out_fd_, chunk, sizeof chunk);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) return std::nullopt;
      buf_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  void close_stdin() {
    if (in_fd_ >= 0) close(in_fd_);
    in_fd_ = -1;
  }

  // Exit status, or -signal when killed.
  int wait() {
    if (pid_ <= 0) return status_;
    int st = 0;
    while (waitpid(pid_, &st, 0) < 0 && errno == EINTR) {
    }
    pid_ = -1;
    status_ = WIFEXITED(st) ? WEXITSTATUS(st) : -WTERMSIG(st);
    return status_;
  }

  pid_t pid() const { return pid_; }

 private:
  pid_t pid_ = -1;
  int in_fd_ = -1;
  int out_fd_ = -1;
  int status_ = 0;
  std::string buf_;
};

// Evaluation backend speaking the worker protocol to a subprocess. Calls
// are serialized; requests within a call are pipelined and matched back by
// msg_id.
class WorkerBackend : public EvaluationBackend {
 public:
  explicit WorkerBackend(const std::vector<std::string>& argv, std::optional<TrainBudget> budget = std::nullopt)
      : proc_(argv), budget_(budget) {
    ::signal(SIGPIPE, SIG_IGN);
    proc_.write_line(protocol::encode({{"type", "hello"}, {"version", protocol::kVersion}}));
    const auto line = proc_.read_line();
    if (!line) throw ProtocolError("worker closed the stream during handshake");
    const json hello = json::parse(*line, nullptr, false);
    if (hello.is_discarded() || !hello.is_object()) throw ProtocolError("worker sent an invalid handshake");
    if (hello.value("type", "") != "hello")
      throw ProtocolError("worker refused handshake: " + hello.value("error", std::string("no reason given")));
    if (hello.value("version", -1) != protocol::kVersion)
      throw ProtocolError("worker speaks protocol version " + hello["version"].dump());
    axes_ = hello.value("axes", std::vector<std::string>{});
  }

  ~WorkerBackend() override {
    try {
      proc_.write_line(protocol::encode({{"type", "shutdown"}}));
    } catch (const std::exception&) {
    }
    proc_.close_stdin();
  }

  const std::vector<std::string>& axes() const { return axes_; }

  std::vector<EvalRecord> evaluate(std::span<const EvalRequest> requests) override {
    std::lock_guard lock(mu_);
    std::map<long long, std::size_t> pending;
    for (std::size_t i = 0; i < requests.size(); ++i) {
      const long long id = next_id_++;
      pending[id] = i;
      proc_.write_line(protocol::encode(protocol::request_message(id, requests[i], budget_)));
    }
    std::vector<std::optional<EvalRecord>> out(requests.size());
    while (!pending.empty()) {
      const auto line = proc_.read_line();
      if (!line) throw ProtocolError("worker exited with " + std::to_string(pending.size()) + " requests outstanding");
      const json j = json::parse(*line, nullptr, false);
      if (j.is_discarded() || !j.is_object() || !j.contains("msg_id") || !j["msg_id"].is_number_integer()) {
        if (j.is_object() && j.contains("error") && pending.size() == 1) {
          const std::size_t i = pending.begin()->second;
          out[i] = failed_record(requests[i], j["error"].get<std::string>());
          pending.clear();
          break;
        }
        throw ProtocolError("uncorrelated worker response: " + *line);
      }
      auto it = pending.find(j["msg_id"].get<long long>());
      if (it == pending.end()) throw ProtocolError("worker answered unknown msg_id " + j["msg_id"].dump());
      out[it->second] = protocol::decode_response(j, requests[it->second]);
      pending.erase(it);
    }
    std::vector<EvalRecord> records;
    for (auto& r : out) records.push_back(std::move(*r));
    return records;
  }

 private:
  Subprocess proc_;
  std::optional<TrainBudget> budget_;
  std::vector<std::string> axes_;
  std::mutex mu_;
  long long next_id_ = 1;
};

}  // namespace freezehpo
