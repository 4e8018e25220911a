#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "freezehpo/analysis/landscape.hpp"
#include "freezehpo/analysis/spearman.hpp"
#include "freezehpo/fidelity/checks.hpp"
#include "freezehpo/harness/run_config.hpp"
#include "freezehpo/scheduler/backend.hpp"
#include "freezehpo/scheduler/successive_halving.hpp"

namespace freezehpo {

struct FidelityValidation {
  CostMonotonicityReport cost;
  RankReport rank;                 // over layer levels at full data
  int threshold_layer = 0;         // ceil(n / 2)
  std::optional<double> min_rho;   // required rho at and above threshold_layer
  bool rho_threshold_pass = true;
  RankLandscape landscape;

  bool pass() const { return cost.all_pass() && rank.monotone && rho_threshold_pass; }
};

inline json to_json_report(const FidelityValidation& v) {
  json cost = json::array();
  for (const auto& c : v.cost.verdicts)
    cost.push_back({{"config_id", c.config_id},
                    {"fixed", c.fixed},
                    {"seed", c.seed},
                    {"flops_increasing", c.flops_increasing},
                    {"peak_bytes_increasing", c.peak_bytes_increasing},
                    {"pass", c.pass}});
  json j{{"cost_monotonicity", {{"pass", v.cost.all_pass()}, {"pass_fraction", v.cost.pass_fraction}, {"groups", cost}}},
         {"rank_monotonicity", v.rank},
         {"threshold_layer", v.threshold_layer},
         {"rho_threshold_pass", v.rho_threshold_pass},
         {"n_configs", v.landscape.n_configs},
         {"n_seeds", v.landscape.n_seeds},
         {"pass", v.pass()}};
  if (v.min_rho) j["min_rho"] = *v.min_rho;
  return j;
}

// Cost monotonicity along layers for every (config, data level, seed), and
// rank-correlation monotonicity of seed-averaged objectives along layers at
// full data against full fidelity.
inline FidelityValidation validate_fidelity(const RunConfig& cfg, std::span<const EvalRecord> records, double tolerance,
                                            std::optional<double> min_rho = std::nullopt) {
  FidelityValidation v;
  v.cost = check_cost_monotonicity(records, {kLayersAxis});
  const auto& rows = cfg.layers_axis();
  const auto& cols = cfg.data_axis();
  const auto grid = objective_grid(records, rows, cols);
  const std::size_t full_col = cols.size() - 1;
  std::vector<std::vector<double>> per_level;
  for (std::size_t i = 0; i < rows.size(); ++i) per_level.push_back(grid.cells.at({i, full_col}));
  v.rank = check_rank_monotonicity(rows.levels, per_level, per_level.back(), tolerance);
  v.landscape = rank_landscape(records, rows, cols);
  v.threshold_layer = (cfg.n_layers() + 1) / 2;
  v.min_rho = min_rho;
  if (min_rho)
    for (std::size_t i = 0; i < rows.size(); ++i)
      if (rows.levels[i] >= v.threshold_layer && !(v.rank.rho[i] >= *min_rho)) v.rho_threshold_pass = false;
  return v;
}

struct Comparison {
  ShTrace diagonal;
  ShTrace single;
  RankLandscape landscape;
  bool diagonal_cheaper = true;  // cumulative FLOPs at every matched data level
};

inline void attach_rank_correlations(ShTrace& t, const RankLandscape& l) {
  for (auto& r : t.rungs) {
    const std::size_t i = l.row_axis.index_of(r.fidelity.at(l.row_axis.name));
    const std::size_t j = l.col_axis.index_of(r.fidelity.at(l.col_axis.name));
    r.rank_correlation = l.at(i, j);
  }
}

// Diagonal and data-only SH over the same configs, served from sweep
// records of the first seed.
inline Comparison run_comparison(const RunConfig& cfg, std::span<const EvalRecord> records) {
  const std::uint64_t seed = cfg.seeds.front();
  TabularBackend table;
  for (const auto& r : records)
    if (r.seed == seed) table.add(r);
  const auto configs = cfg.search_space.enumerate();
  ShConfig sh = make_sh_config(cfg);
  sh.n_configs = static_cast<int>(configs.size());

  Comparison c;
  c.landscape = rank_landscape(records, cfg.layers_axis(), cfg.data_axis());
  sh.mode = ShMode::diagonal;
  const auto diag_schedule = sh_schedule(sh);
  c.diagonal = run_sh(diag_schedule, configs, table, nullptr, {ShMode::diagonal, seed, std::nullopt});
  sh.mode = ShMode::single_axis;
  sh.moving_axis = kDataAxis;
  const auto single_schedule = sh_schedule(sh);
  c.single = run_sh(single_schedule, configs, table, nullptr, {ShMode::single_axis, seed, std::nullopt});
  attach_rank_correlations(c.diagonal, c.landscape);
  attach_rank_correlations(c.single, c.landscape);
  for (const auto& d : c.diagonal.rungs)
    for (const auto& s : c.single.rungs)
      if (d.fidelity.data_fraction() == s.fidelity.data_fraction() && d.cumulative_flops > s.cumulative_flops)
        c.diagonal_cheaper = false;
  return c;
}

}  // namespace freezehpo
