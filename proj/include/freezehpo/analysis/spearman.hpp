#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "freezehpo/core/error.hpp"

namespace freezehpo {

// 1-based fractional ranks: tied values share the mean of their positions.
inline std::vector<double> average_ranks(std::span<const double> v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i + 1;
    while (j < n && v[order[j]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + 1 + j);  // mean of positions i+1 .. j
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = r;
    i = j;
  }
  return ranks;
}

inline double pearson(std::span<const double> a, std::span<const double> b, bool* degenerate = nullptr) {
  const std::size_t n = a.size();
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(n);
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  if (degenerate) *degenerate = false;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

struct SpearmanResult {
  double rho = 0.0;
  bool degenerate = false;  // one side has zero rank variance; rho is 0 by definition
};

// Spearman's rho as the Pearson correlation of average-rank vectors.
inline SpearmanResult spearman_detail(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw ConfigError("spearman: length mismatch (" + std::to_string(x.size()) + " vs " + std::to_string(y.size()) + ")");
  if (x.size() < 2) throw ConfigError("spearman: need at least 2 observations");
  for (std::size_t i = 0; i < x.size(); ++i)
    if (std::isnan(x[i]) || std::isnan(y[i])) throw ConfigError("spearman: NaN input");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  SpearmanResult r;
  r.rho = pearson(rx, ry, &r.degenerate);
  return r;
}

inline double spearman(std::span<const double> x, std::span<const double> y) { return spearman_detail(x, y).rho; }

// Replaces +inf (diverged) entries by distinct values above every finite
// entry, ordered by position, so diverged runs rank last with ties broken
// by the order the caller supplies (config id).
inline std::vector<double> rankable(std::span<const double> objectives) {
  double top = 0.0;
  bool any_finite = false;
  for (double v : objectives)
    if (std::isfinite(v)) {
      top = any_finite ? std::max(top, v) : v;
      any_finite = true;
    }
  std::vector<double> out(objectives.begin(), objectives.end());
  const double step = std::max(1.0, std::abs(top));
  double next = top + step;
  for (auto& v : out)
    if (std::isinf(v) && v > 0) {
      v = next;
      next += step;
    }
  return out;
}

// Fraction of unordered pairs whose order is strictly reversed between the
// two series (discordant pairs / all pairs).
inline double discordant_fraction(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ConfigError("discordant_fraction: length mismatch");
  const std::size_t n = a.size();
  if (n < 2) return 0.0;
  std::size_t discordant = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if ((a[i] - a[j]) * (b[i] - b[j]) < 0.0) ++discordant;
  return static_cast<double>(discordant) / static_cast<double>(n * (n - 1) / 2);
}

}  // namespace freezehpo
