#pragma once

#include <algorithm>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "freezehpo/analysis/spearman.hpp"
#include "freezehpo/core/types.hpp"
#include "freezehpo/fidelity/axis.hpp"

namespace freezehpo {

// Spearman rho of every grid cell against the reference cell, over the
// same config set. rho[row][col]; rows follow row_axis levels.
struct RankLandscape {
  FidelityAxis row_axis;
  FidelityAxis col_axis;
  std::vector<std::vector<double>> rho;
  std::vector<std::vector<bool>> degenerate;
  FidelityPoint reference;
  int n_configs = 0;
  int n_seeds = 0;  // minimum seeds averaged per (config, cell)

  double at(std::size_t row, std::size_t col) const { return rho.at(row).at(col); }
};

// Seed-averaged objective per config at every cell, config ids ascending.
struct ObjectiveGrid {
  std::vector<int> config_ids;
  std::map<std::pair<std::size_t, std::size_t>, std::vector<double>> cells;
  int min_seeds = 0;
};

inline ObjectiveGrid objective_grid(std::span<const EvalRecord> records, const FidelityAxis& row_axis,
                                    const FidelityAxis& col_axis) {
  struct Acc {
    double sum = 0.0;
    int n = 0;
  };
  std::map<std::pair<std::size_t, std::size_t>, std::map<int, Acc>> acc;
  std::set<int> ids;
  for (const auto& r : records) {
    const std::size_t i = row_axis.index_of(r.fidelity.at(row_axis.name));
    const std::size_t j = col_axis.index_of(r.fidelity.at(col_axis.name));
    auto& a = acc[{i, j}][r.config_id];
    a.sum += r.ranking_objective();
    a.n += 1;
    ids.insert(r.config_id);
  }
  ObjectiveGrid g;
  g.config_ids.assign(ids.begin(), ids.end());
  std::vector<std::string> gaps;
  g.min_seeds = std::numeric_limits<int>::max();
  for (std::size_t i = 0; i < row_axis.size(); ++i)
    for (std::size_t j = 0; j < col_axis.size(); ++j) {
      auto& cell = g.cells[{i, j}];
      for (int id : g.config_ids) {
        auto it = acc[{i, j}].find(id);
        if (it == acc[{i, j}].end()) {
          gaps.push_back("config " + std::to_string(id) + " at " + row_axis.name + "=" +
                         std::to_string(row_axis.levels[i]) + ", " + col_axis.name + "=" + std::to_string(col_axis.levels[j]));
          cell.push_back(kDivergedObjective);
          continue;
        }
        cell.push_back(it->second.sum / it->second.n);
        g.min_seeds = std::min(g.min_seeds, it->second.n);
      }
    }
  if (!gaps.empty()) {
    std::string msg = "rank landscape: " + std::to_string(gaps.size()) + " missing (config, cell) pairs:";
    for (std::size_t k = 0; k < gaps.size() && k < 10; ++k) msg += "\n  " + gaps[k];
    if (gaps.size() > 10) msg += "\n  ...";
    throw ConfigError(msg);
  }
  if (g.config_ids.empty()) g.min_seeds = 0;
  return g;
}

// Default reference is the full-fidelity corner (both axes at max).
inline RankLandscape rank_landscape(std::span<const EvalRecord> records, const FidelityAxis& row_axis,
                                    const FidelityAxis& col_axis, std::optional<FidelityPoint> reference = std::nullopt) {
  const auto grid = objective_grid(records, row_axis, col_axis);
  if (grid.config_ids.size() < 2) throw ConfigError("rank landscape needs at least 2 configs");
  RankLandscape l;
  l.row_axis = row_axis;
  l.col_axis = col_axis;
  l.reference = reference.value_or(FidelityPoint{{{row_axis.name, row_axis.max()}, {col_axis.name, col_axis.max()}}});
  const std::size_t ri = row_axis.index_of(l.reference.at(row_axis.name));
  const std::size_t rj = col_axis.index_of(l.reference.at(col_axis.name));
  const auto ref = rankable(grid.cells.at({ri, rj}));
  l.n_configs = static_cast<int>(grid.config_ids.size());
  l.n_seeds = grid.min_seeds;
  l.rho.assign(row_axis.size(), std::vector<double>(col_axis.size(), 0.0));
  l.degenerate.assign(row_axis.size(), std::vector<bool>(col_axis.size(), false));
  for (std::size_t i = 0; i < row_axis.size(); ++i)
    for (std::size_t j = 0; j < col_axis.size(); ++j) {
      if (i == ri && j == rj) {
        l.rho[i][j] = 1.0;
        continue;
      }
      const auto s = spearman_detail(rankable(grid.cells.at({i, j})), ref);
      l.rho[i][j] = s.rho;
      l.degenerate[i][j] = s.degenerate;
    }
  return l;
}

struct ThresholdMask {
  double threshold = 0.0;
  std::vector<std::vector<bool>> mask;  // true where rho >= threshold
};

inline std::vector<ThresholdMask> threshold_map(const RankLandscape& l, std::span<const double> thresholds) {
  std::vector<ThresholdMask> out;
  for (double t : thresholds) {
    ThresholdMask m{t, {}};
    for (const auto& row : l.rho) {
      std::vector<bool> r;
      for (double v : row) r.push_back(v >= t);
      m.mask.push_back(std::move(r));
    }
    out.push_back(std::move(m));
  }
  return out;
}

inline bool mask_subset(const ThresholdMask& inner, const ThresholdMask& outer) {
  for (std::size_t i = 0; i < inner.mask.size(); ++i)
    for (std::size_t j = 0; j < inner.mask[i].size(); ++j)
      if (inner.mask[i][j] && !outer.mask[i][j]) return false;
  return true;
}

}  // namespace freezehpo
