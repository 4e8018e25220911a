#pragma once

#include <algorithm>
#include <cstdint>
#include <span>

#include "freezehpo/core/types.hpp"
#include "freezehpo/microtrainer/layer_spec.hpp"
#include "freezehpo/microtrainer/tracking.hpp"

namespace freezehpo {

// Analytic per-step cost of training under a freeze plan. Byte figures use
// kModelScalarBytes per scalar.
struct CostEstimate {
  std::uint64_t flops_per_step = 0;
  std::uint64_t forward_flops = 0;
  std::uint64_t wgrad_flops = 0;
  std::uint64_t dgrad_flops = 0;
  std::uint64_t parameter_bytes = 0;
  std::uint64_t gradient_bytes = 0;
  std::uint64_t optimizer_state_bytes = 0;
  std::uint64_t activation_bytes = 0;
  std::uint64_t peak_bytes = 0;  // sum of the four byte terms
};

inline void to_json(json& j, const CostEstimate& c) {
  j = json{{"flops_per_step", c.flops_per_step},       {"forward_flops", c.forward_flops},
           {"wgrad_flops", c.wgrad_flops},             {"dgrad_flops", c.dgrad_flops},
           {"parameter_bytes", c.parameter_bytes},     {"gradient_bytes", c.gradient_bytes},
           {"optimizer_state_bytes", c.optimizer_state_bytes}, {"activation_bytes", c.activation_bytes},
           {"peak_bytes", c.peak_bytes}};
}

// forward: every parametric layer; weight gradients: trainable layers;
// input gradients: trainable layers except the first one. Activations kept
// for backward are the inputs of trainable-region layers plus the output.
inline CostEstimate estimate_cost(const FreezePlan& plan, std::span<const LayerSpec> arch, int batch_size,
                                  OptimizerKind optimizer) {
  check_plan_matches(plan, arch);
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  const std::uint64_t B = static_cast<std::uint64_t>(batch_size);
  const std::size_t boundary = trainable_boundary(plan, arch);
  CostEstimate c;
  std::uint64_t activation_scalars = B * static_cast<std::uint64_t>(arch.back().d_out);
  for (std::size_t i = 0; i < arch.size(); ++i) {
    const auto& l = arch[i];
    const std::uint64_t mac = 2 * B * static_cast<std::uint64_t>(l.d_in) * static_cast<std::uint64_t>(l.d_out);
    const bool trainable = i >= boundary;
    if (trainable) activation_scalars += B * static_cast<std::uint64_t>(l.d_in);
    if (!l.has_params) continue;
    c.forward_flops += mac;
    if (trainable) c.wgrad_flops += mac;
    if (trainable && i > boundary) c.dgrad_flops += mac;
  }
  c.flops_per_step = c.forward_flops + c.wgrad_flops + c.dgrad_flops;
  const std::uint64_t trainable = plan.trainable_params();
  c.parameter_bytes = parameter_count(arch) * kModelScalarBytes;
  c.gradient_bytes = trainable * kModelScalarBytes;
  c.optimizer_state_bytes = trainable * static_cast<std::uint64_t>(state_scalars_per_param(optimizer)) * kModelScalarBytes;
  c.activation_bytes = activation_scalars * kModelScalarBytes;
  c.peak_bytes = c.parameter_bytes + c.gradient_bytes + c.optimizer_state_bytes + c.activation_bytes;
  return c;
}

// Working-buffer allowance on top of the estimate: one batch x widest layer.
inline std::uint64_t batch_buffer_bytes(std::span<const LayerSpec> arch, int batch_size) {
  int widest = 0;
  for (const auto& l : arch) widest = std::max({widest, l.d_in, l.d_out});
  return static_cast<std::uint64_t>(batch_size) * static_cast<std::uint64_t>(widest) * kModelScalarBytes;
}

}  // namespace freezehpo
