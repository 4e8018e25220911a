#pragma once

#include <chrono>
#include <cstdint>

#include "freezehpo/microtrainer/trainer.hpp"

namespace freezehpo {

struct MeasuredCost {
  double mean_step_wall_ms = 0.0;
  std::uint64_t measured_flops = 0;  // per step, from the instrumented counter
  std::uint64_t peak_tracked_bytes = 0;
  int warmup_passes = 0;
  int measured_passes = 0;
};

inline void to_json(json& j, const MeasuredCost& m) {
  j = json{{"mean_step_wall_ms", m.mean_step_wall_ms},
           {"measured_flops", m.measured_flops},
           {"peak_tracked_bytes", m.peak_tracked_bytes},
           {"warmup_passes", m.warmup_passes},
           {"measured_passes", m.measured_passes}};
}

// Runs `warmup` untimed training steps followed by `reps` timed ones
// (forward, backward and optimizer step each) on a private copy of the
// network.
inline MeasuredCost measure_step(const Network& network, const FreezePlan& plan, const Batch& batch,
                                 const HyperparamConfig& hp, Objective objective, int warmup = 100, int reps = 100) {
  if (reps < 1) throw ConfigError("measure_step needs reps >= 1");
  if (warmup < 0) throw ConfigError("measure_step needs warmup >= 0");
  TrainingSession session(network, plan, hp, objective);
  for (int i = 0; i < warmup; ++i) session.step(batch, hp.learning_rate);
  session.flops().reset();
  session.tracker().reset_peak();
  double total_ms = 0.0;
  for (int i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    session.step(batch, hp.learning_rate);
    total_ms += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  }
  MeasuredCost m;
  m.mean_step_wall_ms = total_ms / reps;
  m.measured_flops = session.flops().total() / static_cast<std::uint64_t>(reps);
  m.peak_tracked_bytes = session.tracker().peak_bytes();
  m.warmup_passes = warmup;
  m.measured_passes = reps;
  return m;
}

}  // namespace freezehpo
