#pragma once

#include <cmath>
#include <functional>

#include "freezehpo/microtrainer/propagation.hpp"

namespace freezehpo {

struct GradcheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;   // scalars compared with relative error
  std::size_t excluded = 0;  // zero-gradient / zero-FD pairs

  bool passed(double tolerance = 1e-4) const { return max_relative_error < tolerance; }
};

// Hook applied to the analytic gradients before comparison; test code uses
// it to plant faults.
using GradientHook = std::function<void(Gradients&)>;

// Compares the plan-restricted analytic gradient with central differences
// (L(p+eps) - L(p-eps)) / (2 eps) for every trainable scalar. Relative
// error is taken against the finite-difference value; pairs where both
// values are below 1e-10 in magnitude are held to an absolute tolerance of
// 1e-10 instead.
inline GradcheckResult finite_diff_gradcheck(const Network& network, const FreezePlan& plan, const Batch& batch,
                                             Objective objective, double eps, const GradientHook& hook = {}) {
  if (!(eps > 0.0 && eps <= 1e-2)) throw ConfigError("gradcheck eps must lie in (0, 1e-2]");
  Gradients grads(network, plan, nullptr);
  {
    Propagator prop(network, plan);
    const auto& out = prop.forward(batch.inputs, batch.size);
    TrackedBuffer g(nullptr, out.size());
    loss_and_grad(out.vec(), batch, objective, g.vec());
    prop.backward(std::move(g), grads);
  }
  if (hook) hook(grads);

  constexpr double kAbsTol = 1e-10;
  GradcheckResult res;
  Network probe = network;
  auto compare = [&](double analytic, double numeric) {
    if (std::abs(analytic) < kAbsTol && std::abs(numeric) < kAbsTol) {
      ++res.excluded;
      if (std::abs(analytic - numeric) > kAbsTol) res.max_relative_error = std::max(res.max_relative_error, 1.0);
      return;
    }
    ++res.checked;
    const double rel = std::abs(analytic - numeric) / std::max(std::abs(numeric), kAbsTol);
    res.max_relative_error = std::max(res.max_relative_error, rel);
  };
  auto check_tensor = [&](std::vector<double>& values, const TrackedBuffer& analytic) {
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double saved = values[k];
      values[k] = saved + eps;
      const double lp = evaluate_loss(probe, batch, objective);
      values[k] = saved - eps;
      const double lm = evaluate_loss(probe, batch, objective);
      values[k] = saved;
      compare(analytic[k], (lp - lm) / (2.0 * eps));
    }
  };
  for (std::size_t i = 0; i < network.layers().size(); ++i) {
    if (!grads.has(i)) continue;
    check_tensor(probe.params(i).weight, grads.at(i).weight);
    check_tensor(probe.params(i).bias, grads.at(i).bias);
  }
  return res;
}

inline GradcheckResult finite_diff_gradcheck(const Network& network, const FreezePlan& plan, const Task& task, double eps,
                                             std::size_t batch_size = 16, const GradientHook& hook = {}) {
  return finite_diff_gradcheck(network, plan, head_batch(task.train, batch_size), task.objective(), eps, hook);
}

}  // namespace freezehpo
