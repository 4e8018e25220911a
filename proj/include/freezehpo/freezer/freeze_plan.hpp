#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "freezehpo/core/error.hpp"
#include "freezehpo/core/types.hpp"

namespace freezehpo {

// One unit of the layer discretization, in forward order.
struct Layer {
  std::string name;
  std::string path;  // dotted path from the root of the module tree
  std::string type;
  std::uint64_t param_count = 0;
  bool ends_with_activation = false;

  bool has_params() const { return param_count > 0; }
};

struct FreezePlanEntry {
  std::string layer_id;
  std::uint64_t param_count = 0;
  bool frozen = false;
};

// Partition of the parametric layers into a frozen prefix of n - z layers
// and a trainable suffix of z layers.
class FreezePlan {
 public:
  FreezePlan() = default;

  int n() const { return static_cast<int>(entries_.size()); }
  int z() const { return z_; }
  int frozen_count() const { return n() - z_; }
  const std::vector<FreezePlanEntry>& entries() const { return entries_; }

  bool is_frozen(int parametric_index) const { return entries_.at(static_cast<std::size_t>(parametric_index)).frozen; }

  std::uint64_t trainable_params() const {
    std::uint64_t s = 0;
    for (const auto& e : entries_)
      if (!e.frozen) s += e.param_count;
    return s;
  }

  std::uint64_t frozen_params() const {
    std::uint64_t s = 0;
    for (const auto& e : entries_)
      if (e.frozen) s += e.param_count;
    return s;
  }

  std::uint64_t total_params() const { return trainable_params() + frozen_params(); }

  friend FreezePlan make_freeze_plan(std::span<const Layer> layers, int n_trainable);

 private:
  std::vector<FreezePlanEntry> entries_;
  int z_ = 0;
};

// Keeps the last `n_trainable` parametric layers trainable and freezes the
// rest. Non-parametric layers in `layers` are ignored.
inline FreezePlan make_freeze_plan(std::span<const Layer> layers, int n_trainable) {
  std::vector<const Layer*> parametric;
  for (const auto& l : layers)
    if (l.has_params()) parametric.push_back(&l);
  const int n = static_cast<int>(parametric.size());
  if (n == 0) throw ConfigError("no parametric layers");
  if (n_trainable < 1 || n_trainable > n)
    throw ConfigError("n_trainable=" + std::to_string(n_trainable) + " out of range; valid interval is [1, " +
                      std::to_string(n) + "]");
  FreezePlan plan;
  plan.z_ = n_trainable;
  plan.entries_.reserve(parametric.size());
  for (int i = 0; i < n; ++i) {
    const Layer& l = *parametric[static_cast<std::size_t>(i)];
    plan.entries_.push_back({l.path.empty() ? l.name : l.path, l.param_count, i < n - n_trainable});
  }
  return plan;
}

inline void to_json(json& j, const FreezePlan& p) {
  json layers = json::array();
  for (const auto& e : p.entries())
    layers.push_back({{"layer_id", e.layer_id}, {"param_count", e.param_count}, {"frozen", e.frozen}});
  j = json{{"n", p.n()},
           {"z", p.z()},
           {"trainable_params", p.trainable_params()},
           {"frozen_params", p.frozen_params()},
           {"layers", std::move(layers)}};
}

}  // namespace freezehpo
