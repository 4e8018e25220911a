#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "freezehpo/core/types.hpp"
#include "freezehpo/microtrainer/propagation.hpp"

namespace freezehpo {

// SGD (optionally with momentum) or Adam with decoupled weight decay.
// State buffers exist only for trainable parameters.
class Optimizer {
 public:
  Optimizer(const Network& net, const FreezePlan& plan, const HyperparamConfig& hp, MemoryTracker* tracker)
      : hp_(hp), kind_(hp.optimizer_kind()), state_(net.layers().size()) {
    check_plan_matches(plan, net.layers());
    const int k = state_scalars_per_param(kind_);
    int p = 0;
    for (std::size_t i = 0; i < net.layers().size(); ++i) {
      const auto& l = net.layers()[i];
      if (!l.has_params) continue;
      if (!plan.is_frozen(p)) {
        const std::size_t n = net.params(i).size();
        if (k >= 1) state_[i].first = TrackedBuffer(tracker, n);
        if (k >= 2) state_[i].second = TrackedBuffer(tracker, n);
        trainable_.push_back(i);
      }
      ++p;
    }
  }

  OptimizerKind kind() const { return kind_; }

  std::size_t state_scalars() const {
    std::size_t n = 0;
    for (const auto& s : state_) n += s.first.size() + s.second.size();
    return n;
  }

  void step(Network& net, Gradients& grads, double lr) {
    ++t_;
    for (std::size_t i : trainable_) {
      auto& params = net.params(i);
      auto& g = grads.at(i);
      const std::size_t nw = params.weight.size();
      update(params.weight.data(), g.weight.data(), nw, 0, i, lr);
      update(params.bias.data(), g.bias.data(), params.bias.size(), nw, i, lr);
    }
  }

 private:
  // `offset` locates this tensor inside the layer's flat state buffers.
  void update(double* p, const double* g, std::size_t n, std::size_t offset, std::size_t layer, double lr) {
    auto& [m, v] = state_[layer];
    const double wd = hp_.weight_decay;
    switch (kind_) {
      case OptimizerKind::sgd:
        for (std::size_t k = 0; k < n; ++k) p[k] -= lr * (g[k] + wd * p[k]);
        break;
      case OptimizerKind::sgd_momentum:
        for (std::size_t k = 0; k < n; ++k) {
          double& buf = m[offset + k];
          buf = hp_.beta1 * buf + g[k] + wd * p[k];
          p[k] -= lr * buf;
        }
        break;
      case OptimizerKind::adam: {
        const double b1 = hp_.beta1, b2 = hp_.beta2;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
        for (std::size_t k = 0; k < n; ++k) {
          double& mk = m[offset + k];
          double& vk = v[offset + k];
          mk = b1 * mk + (1.0 - b1) * g[k];
          vk = b2 * vk + (1.0 - b2) * g[k] * g[k];
          const double mhat = mk / c1, vhat = vk / c2;
          p[k] -= lr * (mhat / (std::sqrt(vhat) + 1e-8) + wd * p[k]);
        }
        break;
      }
    }
  }

  HyperparamConfig hp_;
  OptimizerKind kind_;
  std::vector<std::pair<TrackedBuffer, TrackedBuffer>> state_;
  std::vector<std::size_t> trainable_;
  long t_ = 0;
};

// Linear warmup, constant plateau, linear cooldown to zero, all relative
// to the full step budget.
inline double scheduled_lr(const HyperparamConfig& hp, int step, int total_steps) {
  const double s = static_cast<double>(step);
  const double total = static_cast<double>(total_steps);
  double factor = 1.0;
  const double warmup = hp.warmup_fraction * total;
  if (warmup > 0.0 && s < warmup) factor = std::min(factor, (s + 1.0) / warmup);
  const double cooldown = hp.cooldown_fraction * total;
  if (cooldown > 0.0 && s >= total - cooldown) factor = std::min(factor, (total - s) / cooldown);
  return hp.learning_rate * factor;
}

}  // namespace freezehpo
