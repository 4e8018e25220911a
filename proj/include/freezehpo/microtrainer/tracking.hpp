#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

namespace freezehpo {

// Bytes per scalar in the memory model (f32 tensors), independent of the
// 64-bit arithmetic the micro-trainer uses.
inline constexpr std::uint64_t kModelScalarBytes = 4;

class MemoryTracker {
 public:
  void acquire(std::size_t scalars) {
    current_ += scalars;
    if (current_ > peak_) peak_ = current_;
  }
  void release(std::size_t scalars) { current_ -= scalars; }
  void reset_peak() { peak_ = current_; }

  std::size_t current_scalars() const { return current_; }
  std::size_t peak_scalars() const { return peak_; }
  std::uint64_t peak_bytes() const { return peak_ * kModelScalarBytes; }

 private:
  std::size_t current_ = 0;
  std::size_t peak_ = 0;
};

// Floating-point operation counter; a multiply-add counts as 2.
struct FlopCounter {
  std::uint64_t forward = 0;
  std::uint64_t wgrad = 0;
  std::uint64_t dgrad = 0;

  std::uint64_t total() const { return forward + wgrad + dgrad; }
  void reset() { forward = wgrad = dgrad = 0; }
};

// Heap buffer whose size is registered with a MemoryTracker for its lifetime.
class TrackedBuffer {
 public:
  TrackedBuffer() = default;
  TrackedBuffer(MemoryTracker* tracker, std::size_t n, double fill = 0.0) : tracker_(tracker), data_(n, fill) {
    if (tracker_) tracker_->acquire(n);
  }
  TrackedBuffer(const TrackedBuffer&) = delete;
  TrackedBuffer& operator=(const TrackedBuffer&) = delete;
  TrackedBuffer(TrackedBuffer&& o) noexcept : tracker_(std::exchange(o.tracker_, nullptr)), data_(std::move(o.data_)) {}
  TrackedBuffer& operator=(TrackedBuffer&& o) noexcept {
    if (this != &o) {
      reset();
      tracker_ = std::exchange(o.tracker_, nullptr);
      data_ = std::move(o.data_);
    }
    return *this;
  }
  ~TrackedBuffer() { reset(); }

  void reset() {
    if (tracker_) tracker_->release(data_.size());
    tracker_ = nullptr;
    data_.clear();
    data_.shrink_to_fit();
  }

  bool empty() const { return data_.empty(); }
  std::size_t size() const { return data_.size(); }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

 private:
  MemoryTracker* tracker_ = nullptr;
  std::vector<double> data_;
};

}  // namespace freezehpo
