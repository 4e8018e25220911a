#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "freezehpo/core/parallel.hpp"
#include "freezehpo/harness/micro_backend.hpp"
#include "freezehpo/harness/run_config.hpp"
#include "freezehpo/harness/store.hpp"

namespace freezehpo {

// One training: a config at a layer level for one seed. It produces one
// record per data level.
struct SweepUnit {
  HyperparamConfig config;
  int layers = 0;
  std::uint64_t seed = 0;
};

struct SweepOptions {
  int jobs = 1;
  std::optional<std::size_t> max_units;  // stop after training this many units
  std::function<void(std::size_t done, std::size_t total)> progress;
};

struct SweepSummary {
  std::size_t units = 0;
  std::size_t trained = 0;
  std::size_t skipped = 0;  // already complete in the store
  std::size_t records_written = 0;
  bool complete = false;
};

// Config-major, then layer level, then seed.
inline std::vector<SweepUnit> sweep_units(const RunConfig& cfg) {
  std::vector<SweepUnit> units;
  for (const auto& c : cfg.search_space.enumerate())
    for (double z : cfg.layers_axis().levels)
      for (std::uint64_t s : cfg.seeds) units.push_back({c, static_cast<int>(z), s});
  return units;
}

inline FidelityPoint sweep_point(int layers, double data) {
  FidelityPoint p;
  p.values = {{kLayersAxis, static_cast<double>(layers)}, {kDataAxis, data}};
  return p;
}

// Full grid of configs x layer levels x data levels x seeds. Units are
// trained `jobs` at a time and committed in unit order, so the store content
// does not depend on `jobs` or on where a previous run stopped.
inline SweepSummary run_sweep(const RunConfig& cfg, const MicroBackend& backend, ResultStore& store,
                              const SweepOptions& options = {}) {
  const auto units = sweep_units(cfg);
  const auto& levels = cfg.data_axis().levels;
  SweepSummary summary;
  summary.units = units.size();

  std::vector<std::size_t> todo;
  for (std::size_t u = 0; u < units.size(); ++u) {
    bool complete = true;
    for (double d : levels)
      complete = complete && store.has_eval(units[u].config.id, sweep_point(units[u].layers, d), units[u].seed);
    if (complete)
      ++summary.skipped;
    else
      todo.push_back(u);
  }
  if (options.max_units && todo.size() > *options.max_units) todo.resize(*options.max_units);

  const std::size_t chunk = static_cast<std::size_t>(std::max(1, options.jobs));
  for (std::size_t start = 0; start < todo.size(); start += chunk) {
    const std::size_t end = std::min(todo.size(), start + chunk);
    std::vector<std::vector<EvalRecord>> results(end - start);
    parallel_for(end - start, options.jobs, [&](std::size_t k) {
      const auto& unit = units[todo[start + k]];
      results[k] = backend.evaluate_levels(unit.config, unit.layers, unit.seed, levels);
    });
    for (auto& recs : results) {
      for (const auto& r : recs) {
        if (store.has_eval(r.config_id, r.fidelity, r.seed)) continue;
        store.append_eval(r);
        ++summary.records_written;
      }
      ++summary.trained;
      if (options.progress) options.progress(summary.skipped + summary.trained, summary.units);
    }
  }
  summary.complete = summary.skipped + summary.trained == summary.units;
  return summary;
}

// Sweep records on the configured grid, any extra store content ignored.
inline std::vector<EvalRecord> sweep_records(const RunConfig& cfg, const ResultStore& store) {
  std::vector<EvalRecord> out;
  for (const auto& unit : sweep_units(cfg))
    for (double d : cfg.data_axis().levels) {
      auto r = store.find_eval(unit.config.id, sweep_point(unit.layers, d), unit.seed);
      if (!r)
        throw ConfigError("sweep incomplete: config " + std::to_string(unit.config.id) + " layers " +
                          std::to_string(unit.layers) + " seed " + std::to_string(unit.seed) + " missing; run `sweep` first");
      out.push_back(std::move(*r));
    }
  return out;
}

}  // namespace freezehpo
