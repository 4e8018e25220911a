#pragma once

#include <algorithm>
#include <cstdint>
#include <tuple>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "freezehpo/analysis/spearman.hpp"
#include "freezehpo/core/types.hpp"

namespace freezehpo {

struct CostMonotonicityOptions {
  std::string axis = kLayersAxis;
  bool check_wall_time = false;
  double wall_tolerance = 0.05;  // t(z_{i+1}) must exceed (1 - tol) * t(z_i)
};

struct CostVerdict {
  int config_id = 0;
  FidelityPoint fixed;  // values of the other axes for this group
  std::uint64_t seed = 0;
  std::vector<double> levels;
  bool flops_increasing = false;
  bool peak_bytes_increasing = false;
  std::optional<bool> wall_time_increasing;
  bool pass = false;
};

struct CostMonotonicityReport {
  std::vector<CostVerdict> verdicts;
  double pass_fraction = 0.0;
  bool all_pass() const { return pass_fraction == 1.0; }
};

// Groups records by (config, other axes, seed) and checks that each cost metric
// strictly increases along `options.axis`.
inline CostMonotonicityReport check_cost_monotonicity(std::span<const EvalRecord> records,
                                                      const CostMonotonicityOptions& options = {}) {
  if (records.empty()) throw ConfigError("cost monotonicity: no records");
  const int batch = records.front().batch_size;
  std::map<std::tuple<int, FidelityPoint, std::uint64_t>, std::vector<const EvalRecord*>> groups;
  for (const auto& r : records) {
    if (r.batch_size != batch)
      throw ConfigError("cost monotonicity: incomparable records (batch sizes " + std::to_string(batch) + " and " +
                        std::to_string(r.batch_size) + ")");
    FidelityPoint rest = r.fidelity;
    rest.values.erase(options.axis);
    groups[{r.config_id, rest, r.seed}].push_back(&r);
  }
  CostMonotonicityReport report;
  std::size_t passed = 0;
  for (auto& [key, group] : groups) {
    std::sort(group.begin(), group.end(),
              [&](const EvalRecord* a, const EvalRecord* b) { return a->fidelity.at(options.axis) < b->fidelity.at(options.axis); });
    if (group.size() < 2)
      throw ConfigError("cost monotonicity: config " + std::to_string(std::get<0>(key)) + " evaluated at a single fidelity");
    CostVerdict v;
    v.config_id = std::get<0>(key);
    v.fixed = std::get<1>(key);
    v.seed = std::get<2>(key);
    v.flops_increasing = v.peak_bytes_increasing = true;
    bool wall = true;
    for (std::size_t i = 0; i < group.size(); ++i) {
      v.levels.push_back(group[i]->fidelity.at(options.axis));
      if (i == 0) continue;
      const auto& lo = group[i - 1]->cost;
      const auto& hi = group[i]->cost;
      if (group[i]->fidelity.at(options.axis) == group[i - 1]->fidelity.at(options.axis))
        throw ConfigError("cost monotonicity: duplicate fidelity for config " + std::to_string(std::get<0>(key)));
      v.flops_increasing = v.flops_increasing && hi.flops > lo.flops;
      v.peak_bytes_increasing = v.peak_bytes_increasing && hi.peak_bytes > lo.peak_bytes;
      wall = wall && hi.wall_ms > (1.0 - options.wall_tolerance) * lo.wall_ms;
    }
    if (options.check_wall_time) v.wall_time_increasing = wall;
    v.pass = v.flops_increasing && v.peak_bytes_increasing && v.wall_time_increasing.value_or(true);
    passed += v.pass ? 1 : 0;
    report.verdicts.push_back(std::move(v));
  }
  report.pass_fraction = static_cast<double>(passed) / static_cast<double>(report.verdicts.size());
  return report;
}

// Rank correlation per fidelity level against the full-fidelity reference,
// the empirical disagreement rate delta per level, and the verdict.
struct RankReport {
  std::vector<double> levels;
  std::vector<double> rho;
  std::vector<double> delta;  // empty when only rho was supplied
  double tolerance = 0.0;
  bool monotone = false;
};

inline bool rank_monotone(std::span<const double> rho, double tolerance) {
  for (std::size_t i = 1; i < rho.size(); ++i)
    if (rho[i] < rho[i - 1] - tolerance) return false;
  return true;
}

inline RankReport check_rank_monotonicity(std::span<const double> levels, std::span<const double> rho, double tolerance) {
  if (rho.size() < 2) throw ConfigError("rank monotonicity needs at least 2 fidelity levels");
  if (levels.size() != rho.size()) throw ConfigError("rank monotonicity: levels and rho differ in length");
  RankReport r;
  r.levels.assign(levels.begin(), levels.end());
  r.rho.assign(rho.begin(), rho.end());
  r.tolerance = tolerance;
  r.monotone = rank_monotone(rho, tolerance);
  return r;
}

// `objectives[i][c]` is config c's objective at levels[i]; `reference[c]`
// its objective at full fidelity. Configs must be aligned by id order.
inline RankReport check_rank_monotonicity(std::span<const double> levels, const std::vector<std::vector<double>>& objectives,
                                          std::span<const double> reference, double tolerance) {
  if (objectives.size() != levels.size()) throw ConfigError("rank monotonicity: levels and objectives differ in length");
  const auto ref = rankable(reference);
  std::vector<double> rho;
  std::vector<double> delta;
  for (const auto& obj : objectives) {
    const auto v = rankable(obj);
    rho.push_back(spearman(v, ref));
    delta.push_back(discordant_fraction(v, ref));
  }
  RankReport r = check_rank_monotonicity(levels, rho, tolerance);
  r.delta = std::move(delta);
  return r;
}

inline void to_json(json& j, const RankReport& r) {
  j = json{{"levels", r.levels}, {"rho", r.rho}, {"delta", r.delta}, {"tolerance", r.tolerance}, {"monotone", r.monotone}};
}

}  // namespace freezehpo
