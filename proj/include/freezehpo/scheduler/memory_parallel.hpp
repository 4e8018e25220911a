#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "freezehpo/core/error.hpp"
#include "freezehpo/core/types.hpp"

namespace freezehpo {

// Job memory m(z) in abstract units, keyed by trainable-layer count, and
// the total budget M. m is non-decreasing in z, so concurrency never grows
// with z. Points without a layers value use the largest key.
struct MemoryModel {
  std::map<int, int> job_units;
  int budget = 1;

  int units_for(const FidelityPoint& p) const {
    if (job_units.empty()) throw ConfigError("memory model has no job sizes");
    if (!p.has(kLayersAxis)) return job_units.rbegin()->second;
    auto it = job_units.find(p.layers());
    if (it == job_units.end()) throw ConfigError("memory model has no entry for layers=" + std::to_string(p.layers()));
    return it->second;
  }

  void validate() const {
    if (budget < 1) throw ConfigError("memory budget must be >= 1");
    int prev = 0;
    for (const auto& [z, m] : job_units) {
      if (m < 1) throw ConfigError("job memory must be >= 1 unit");
      if (m < prev) throw ConfigError("job memory must not decrease with layers");
      prev = m;
    }
  }
};

struct ExecutionWave {
  int index = 0;
  FidelityPoint fidelity;
  std::vector<int> config_ids;
  int memory_used = 0;
};

inline void to_json(json& j, const ExecutionWave& w) {
  j = json{{"index", w.index}, {"fidelity", w.fidelity}, {"config_ids", w.config_ids}, {"memory_used", w.memory_used}};
}

inline void from_json(const json& j, ExecutionWave& w) {
  w.index = j.at("index").get<int>();
  w.fidelity = j.at("fidelity").get<FidelityPoint>();
  w.config_ids = j.at("config_ids").get<std::vector<int>>();
  w.memory_used = j.at("memory_used").get<int>();
}

// Packs a rung's jobs (all at one fidelity) first-fit into waves of
// floor(M / m(z)) concurrent jobs, preserving job order.
inline std::vector<ExecutionWave> plan_memory_parallel(std::span<const int> config_ids, const FidelityPoint& fidelity,
                                                       const MemoryModel& model, int first_wave_index = 0) {
  const int m = model.units_for(fidelity);
  if (m > model.budget)
    throw ConfigError("fidelity does not fit memory budget: job needs " + std::to_string(m) + " units, budget is " +
                      std::to_string(model.budget) + " (minimum budget " + std::to_string(m) + ")");
  const std::size_t per_wave = static_cast<std::size_t>(model.budget / m);
  std::vector<ExecutionWave> waves;
  for (std::size_t start = 0; start < config_ids.size(); start += per_wave) {
    ExecutionWave w;
    w.index = first_wave_index + static_cast<int>(waves.size());
    w.fidelity = fidelity;
    for (std::size_t k = start; k < std::min(config_ids.size(), start + per_wave); ++k) w.config_ids.push_back(config_ids[k]);
    w.memory_used = m * static_cast<int>(w.config_ids.size());
    waves.push_back(std::move(w));
  }
  return waves;
}

// Classical execution: one job per wave.
inline std::vector<ExecutionWave> plan_sequential(std::span<const int> config_ids, const FidelityPoint& fidelity,
                                                  const MemoryModel& model, int first_wave_index = 0) {
  MemoryModel solo = model;
  solo.budget = model.units_for(fidelity);
  return plan_memory_parallel(config_ids, fidelity, solo, first_wave_index);
}

using TimeModel = std::function<double(const FidelityPoint&)>;

// Jobs inside a wave run concurrently, waves run back to back.
inline double simulate_makespan(std::span<const ExecutionWave> waves, const TimeModel& time) {
  double total = 0.0;
  for (const auto& w : waves) {
    const double t = time(w.fidelity);
    if (!(t > 0.0)) throw ConfigError("time model must be positive");
    total += t;
  }
  return total;
}

}  // namespace freezehpo
