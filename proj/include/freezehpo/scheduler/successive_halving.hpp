#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "freezehpo/core/error.hpp"
#include "freezehpo/core/types.hpp"
#include "freezehpo/fidelity/axis.hpp"
#include "freezehpo/scheduler/backend.hpp"
#include "freezehpo/scheduler/memory_parallel.hpp"

namespace freezehpo {

enum class ShMode { single_axis, diagonal };

inline ShMode parse_sh_mode(const std::string& s) {
  if (s == "single_axis" || s == "single") return ShMode::single_axis;
  if (s == "diagonal") return ShMode::diagonal;
  throw ConfigError("unknown SH mode '" + s + "' (expected single_axis or diagonal)");
}

inline std::string to_string(ShMode m) { return m == ShMode::diagonal ? "diagonal" : "single_axis"; }

struct ShConfig {
  double eta = 2.0;
  int n_configs = 0;
  ShMode mode = ShMode::single_axis;
  std::vector<FidelityAxis> axes;
  std::string moving_axis = kDataAxis;  // single_axis mode only
  std::uint64_t seed = 0;
};

struct RungSkeleton {
  int level = 0;
  FidelityPoint fidelity;
  int size = 0;
};

inline int next_rung_size(int size, double eta) {
  return std::max(1, static_cast<int>(std::floor(static_cast<double>(size) / eta)));
}

// Rung fidelities and sizes. single_axis: the moving axis walks its levels
// with the other axes pinned at their maxima; diagonal: rung r takes the
// r-th level of every axis.
inline std::vector<RungSkeleton> sh_schedule(const ShConfig& cfg) {
  if (!(cfg.eta > 1.0)) throw ConfigError("eta must be > 1");
  if (cfg.axes.empty()) throw ConfigError("SH needs at least one fidelity axis");
  if (static_cast<double>(cfg.n_configs) < cfg.eta)
    throw ConfigError("n_configs=" + std::to_string(cfg.n_configs) + " must be >= eta");
  for (const auto& a : cfg.axes) validate_axis(a);
  std::size_t rungs = 0;
  if (cfg.mode == ShMode::diagonal) {
    rungs = cfg.axes.front().size();
    for (const auto& a : cfg.axes)
      if (a.size() != rungs) {
        std::string detail;
        for (const auto& b : cfg.axes) detail += (detail.empty() ? "" : ", ") + b.name + ": " + std::to_string(b.size());
        throw ConfigError("diagonal SH requires every axis to have the same number of levels (" + detail + ")");
      }
  } else {
    rungs = find_axis(cfg.axes, cfg.moving_axis).size();
  }
  std::vector<RungSkeleton> out;
  int size = cfg.n_configs;
  for (std::size_t r = 0; r < rungs; ++r) {
    RungSkeleton s;
    s.level = static_cast<int>(r);
    for (const auto& a : cfg.axes) {
      const bool moves = cfg.mode == ShMode::diagonal || a.name == cfg.moving_axis;
      s.fidelity.values[a.name] = moves ? a.levels[r] : a.max();
    }
    s.size = size;
    out.push_back(std::move(s));
    size = next_rung_size(size, cfg.eta);
  }
  return out;
}

struct Rung {
  int level = 0;
  FidelityPoint fidelity;
  std::vector<int> evaluated;
  std::vector<EvalRecord> results;  // aligned with `evaluated`
  std::vector<int> promoted;        // empty on the last rung
  std::uint64_t cumulative_flops = 0;
  double cumulative_wall_ms = 0.0;
  std::vector<ExecutionWave> waves;
  std::optional<double> rank_correlation;
};

inline void to_json(json& j, const Rung& r) {
  j = json{{"level", r.level},
           {"fidelity", r.fidelity},
           {"evaluated", r.evaluated},
           {"promoted", r.promoted},
           {"cumulative_flops", r.cumulative_flops},
           {"cumulative_wall_ms", r.cumulative_wall_ms},
           {"waves", r.waves.size()}};
  if (r.rank_correlation) j["rank_correlation"] = *r.rank_correlation;
}

struct ShTrace {
  ShMode mode = ShMode::single_axis;
  std::vector<Rung> rungs;
  int winner_id = -1;
  std::optional<EvalRecord> winner_record;
};

// Hooks for persistence and resume. lookup() returning a record skips the
// evaluation.
class ShObserver {
 public:
  virtual ~ShObserver() = default;
  virtual std::optional<EvalRecord> lookup(int /*config_id*/, const FidelityPoint&, std::uint64_t /*seed*/) {
    return std::nullopt;
  }
  virtual void on_eval(const EvalRecord&) {}
  virtual void on_wave(const ExecutionWave&) {}
  virtual void on_rung(const Rung&) {}
};

struct ShOptions {
  ShMode mode = ShMode::single_axis;
  std::uint64_t eval_seed = 0;
  std::optional<MemoryModel> memory;  // when set, rungs execute as memory-packed waves
};

// Best `keep` records under the total order of ranks_before.
inline std::vector<int> promote(std::vector<EvalRecord> results, int keep) {
  std::sort(results.begin(), results.end(), ranks_before);
  std::vector<int> ids;
  for (int k = 0; k < keep && k < static_cast<int>(results.size()); ++k) ids.push_back(results[static_cast<std::size_t>(k)].config_id);
  return ids;
}

// Synchronous successive halving: each rung is fully evaluated before the
// best next-rung-size configs are promoted. Backend failures become
// diverged records and are never promoted ahead of finite results.
inline ShTrace run_sh(std::span<const RungSkeleton> schedule, std::span<const HyperparamConfig> configs,
                      EvaluationBackend& backend, ShObserver* observer = nullptr, const ShOptions& options = {}) {
  if (schedule.empty()) throw ConfigError("empty SH schedule");
  if (static_cast<int>(configs.size()) != schedule.front().size)
    throw ConfigError("SH schedule expects " + std::to_string(schedule.front().size) + " configs, got " +
                      std::to_string(configs.size()));
  std::map<int, const HyperparamConfig*> by_id;
  for (const auto& c : configs)
    if (!by_id.emplace(c.id, &c).second) throw ConfigError("duplicate config id " + std::to_string(c.id));
  if (options.memory) options.memory->validate();

  ShTrace trace;
  trace.mode = options.mode;
  std::vector<int> candidates;
  for (const auto& c : configs) candidates.push_back(c.id);
  std::uint64_t flops = 0;
  double wall = 0.0;
  int wave_index = 0;

  for (std::size_t r = 0; r < schedule.size(); ++r) {
    Rung rung;
    rung.level = schedule[r].level;
    rung.fidelity = schedule[r].fidelity;
    rung.evaluated = candidates;
    rung.waves = options.memory ? plan_memory_parallel(candidates, rung.fidelity, *options.memory, wave_index)
                                : std::vector<ExecutionWave>{{wave_index, rung.fidelity, candidates, 0}};
    wave_index += static_cast<int>(rung.waves.size());

    std::map<int, EvalRecord> done;
    for (const auto& wave : rung.waves) {
      std::vector<EvalRequest> pending;
      for (int id : wave.config_ids) {
        std::optional<EvalRecord> cached = observer ? observer->lookup(id, rung.fidelity, options.eval_seed) : std::nullopt;
        if (cached)
          done[id] = *cached;
        else
          pending.push_back({*by_id.at(id), rung.fidelity, options.eval_seed});
      }
      std::vector<EvalRecord> results;
      if (!pending.empty()) {
        try {
          results = backend.evaluate(pending);
          if (results.size() != pending.size()) throw Error("backend returned a wrong number of results");
        } catch (const std::exception& e) {
          results.clear();
          for (const auto& req : pending) results.push_back(failed_record(req, e.what()));
        }
      }
      for (std::size_t k = 0; k < results.size(); ++k) {
        EvalRecord rec = std::move(results[k]);
        rec.config_id = pending[k].config.id;
        rec.fidelity = rung.fidelity;
        rec.seed = options.eval_seed;
        if (!rec.error.empty()) {
          rec.diverged = true;
          rec.objective = kDivergedObjective;
        }
        if (observer) observer->on_eval(rec);
        done[rec.config_id] = std::move(rec);
      }
      if (observer) observer->on_wave(wave);
    }
    for (int id : candidates) {
      const auto& rec = done.at(id);
      flops += rec.cost.flops;
      wall += rec.cost.wall_ms;
      rung.results.push_back(rec);
    }
    rung.cumulative_flops = flops;
    rung.cumulative_wall_ms = wall;
    if (r + 1 < schedule.size()) {
      rung.promoted = promote(rung.results, schedule[r + 1].size);
      candidates = rung.promoted;
    } else {
      std::vector<EvalRecord> sorted = rung.results;
      std::sort(sorted.begin(), sorted.end(), ranks_before);
      trace.winner_id = sorted.front().config_id;
      trace.winner_record = sorted.front();
    }
    if (observer) observer->on_rung(rung);
    trace.rungs.push_back(std::move(rung));
  }
  return trace;
}

}  // namespace freezehpo
