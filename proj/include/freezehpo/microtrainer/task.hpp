#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "freezehpo/core/error.hpp"
#include "freezehpo/core/rng.hpp"

namespace freezehpo {

enum class Objective { cross_entropy, mse };

inline Objective parse_objective(const std::string& s) {
  if (s == "cross_entropy") return Objective::cross_entropy;
  if (s == "mse") return Objective::mse;
  throw ConfigError("unknown objective '" + s + "' (expected cross_entropy or mse)");
}

inline std::string to_string(Objective o) { return o == Objective::mse ? "mse" : "cross_entropy"; }

struct Dataset {
  int input_dim = 0;
  int target_dim = 0;
  std::vector<double> inputs;   // N x input_dim
  std::vector<int> labels;      // N
  std::vector<double> targets;  // N x target_dim, one-hot of labels

  std::size_t size() const { return labels.size(); }
};

// A contiguous mini-batch copied out of a Dataset.
struct Batch {
  int size = 0;
  int input_dim = 0;
  int target_dim = 0;
  std::vector<double> inputs;
  std::vector<int> labels;
  std::vector<double> targets;
};

inline Batch gather(const Dataset& d, std::span<const std::size_t> rows) {
  Batch b;
  b.size = static_cast<int>(rows.size());
  b.input_dim = d.input_dim;
  b.target_dim = d.target_dim;
  b.inputs.reserve(rows.size() * static_cast<std::size_t>(d.input_dim));
  b.targets.reserve(rows.size() * static_cast<std::size_t>(d.target_dim));
  for (auto r : rows) {
    const auto in = d.inputs.begin() + static_cast<std::ptrdiff_t>(r * static_cast<std::size_t>(d.input_dim));
    b.inputs.insert(b.inputs.end(), in, in + d.input_dim);
    const auto tg = d.targets.begin() + static_cast<std::ptrdiff_t>(r * static_cast<std::size_t>(d.target_dim));
    b.targets.insert(b.targets.end(), tg, tg + d.target_dim);
    b.labels.push_back(d.labels[r]);
  }
  return b;
}

inline Batch head_batch(const Dataset& d, std::size_t n) {
  n = std::min(n, d.size());
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = i;
  return gather(d, rows);
}

struct TaskSpec {
  std::string name = "spiral";
  std::uint64_t generator_seed = 0;
  int train_size = 2048;
  int validation_size = 512;
  int classes = 2;
  double noise = 0.05;
  double turns = 1.0;
  Objective objective = Objective::cross_entropy;
};

struct Task {
  TaskSpec spec;
  Dataset train;
  Dataset validation;

  int input_dim() const { return train.input_dim; }
  int target_dim() const { return train.target_dim; }
  Objective objective() const { return spec.objective; }
};

// Interleaved spiral arms, one per class, in the unit disc. Train and
// validation points come from one seeded stream and never overlap.
inline Task make_task(const TaskSpec& spec) {
  if (spec.name != "spiral") throw ConfigError("unknown task '" + spec.name + "' (only spiral is built in)");
  if (spec.train_size < 1 || spec.validation_size < 1) throw ConfigError("task split sizes must be positive");
  if (spec.classes < 2) throw ConfigError("spiral task needs at least 2 classes");
  Rng rng(spec.generator_seed);
  auto fill = [&](Dataset& d, int n) {
    d.input_dim = 2;
    d.target_dim = spec.classes;
    for (int i = 0; i < n; ++i) {
      const int c = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.classes)));
      const double t = rng.uniform(0.05, 1.0);
      const double theta = 2.0 * std::numbers::pi * (spec.turns * t + static_cast<double>(c) / spec.classes);
      d.inputs.push_back(t * std::cos(theta) + spec.noise * rng.normal());
      d.inputs.push_back(t * std::sin(theta) + spec.noise * rng.normal());
      d.labels.push_back(c);
      for (int k = 0; k < spec.classes; ++k) d.targets.push_back(k == c ? 1.0 : 0.0);
    }
  };
  Task task;
  task.spec = spec;
  fill(task.train, spec.train_size);
  fill(task.validation, spec.validation_size);
  return task;
}

// Endless sequence of training-set indices: consecutive seeded
// permutations, so any prefix shorter than one epoch never repeats a sample.
class SampleStream {
 public:
  SampleStream(std::size_t n, std::uint64_t seed) : rng_(seed), order_(n) {
    for (std::size_t i = 0; i < n; ++i) order_[i] = i;
    rng_.shuffle(order_);
  }

  std::vector<std::size_t> next(std::size_t count) {
    std::vector<std::size_t> out;
    out.reserve(count);
    while (out.size() < count) {
      if (pos_ == order_.size()) {
        rng_.shuffle(order_);
        pos_ = 0;
      }
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

}  // namespace freezehpo
