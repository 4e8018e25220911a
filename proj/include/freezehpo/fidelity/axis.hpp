#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "freezehpo/core/error.hpp"
#include "freezehpo/core/types.hpp"

namespace freezehpo {

enum class AxisKind { integer, rational };
enum class Pattern { geometric, uniform };

inline Pattern parse_pattern(const std::string& s) {
  if (s == "geometric") return Pattern::geometric;
  if (s == "uniform") return Pattern::uniform;
  throw ConfigError("unknown discretization pattern '" + s + "' (expected geometric or uniform)");
}

struct FidelityAxis {
  std::string name;
  AxisKind kind = AxisKind::integer;
  std::vector<double> levels;  // strictly increasing

  double min() const { return levels.front(); }
  double max() const { return levels.back(); }
  std::size_t size() const { return levels.size(); }

  bool contains(double v) const {
    return std::any_of(levels.begin(), levels.end(), [&](double l) { return std::abs(l - v) <= 1e-12 * std::max(1.0, std::abs(l)); });
  }

  std::size_t index_of(double v) const {
    for (std::size_t i = 0; i < levels.size(); ++i)
      if (std::abs(levels[i] - v) <= 1e-12 * std::max(1.0, std::abs(levels[i]))) return i;
    throw ConfigError("value " + std::to_string(v) + " is not a level of axis '" + name + "'");
  }
};

inline AxisKind default_kind(const std::string& axis_name) {
  return axis_name == kLayersAxis ? AxisKind::integer : AxisKind::rational;
}

inline void validate_axis(const FidelityAxis& axis) {
  if (axis.levels.empty()) throw ConfigError("axis '" + axis.name + "' has no levels");
  for (std::size_t i = 1; i < axis.levels.size(); ++i)
    if (!(axis.levels[i] > axis.levels[i - 1]))
      throw ConfigError("axis '" + axis.name + "' levels must be strictly increasing");
  if (axis.kind == AxisKind::integer)
    for (double v : axis.levels)
      if (v != std::round(v)) throw ConfigError("axis '" + axis.name + "' is integer but has level " + std::to_string(v));
  if (axis.name == kLayersAxis && axis.min() < 1) throw ConfigError("layers axis levels must be >= 1");
  if (axis.name == kDataAxis && !(axis.min() > 0.0 && axis.max() <= 1.0))
    throw ConfigError("data_fraction levels must lie in (0, 1]");
}

// Geometric: min * (max/min)^(i/(count-1)); uniform: evenly spaced. Both
// include the endpoints exactly. Integer axes are rounded and deduplicated,
// so the returned list may be shorter than `count`.
inline std::vector<double> discretize_axis(AxisKind kind, double min, double max, int count, Pattern pattern) {
  if (count < 2) throw ConfigError("discretization needs count >= 2");
  if (!(max > min)) throw ConfigError("discretization needs max > min");
  if (pattern == Pattern::geometric && !(min > 0.0)) throw ConfigError("geometric discretization needs min > 0");
  if (kind == AxisKind::integer) {
    if (min != std::round(min) || max != std::round(max)) throw ConfigError("integer axis bounds must be integers");
    if (static_cast<double>(count) > max - min + 1.0)
      throw ConfigError("count " + std::to_string(count) + " exceeds the " + std::to_string(static_cast<long>(max - min + 1)) +
                        " distinct integer values available");
  }
  std::vector<double> levels;
  levels.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(count - 1);
    double v = pattern == Pattern::geometric ? min * std::pow(max / min, t) : min + t * (max - min);
    if (i == 0) v = min;
    if (i == count - 1) v = max;
    if (kind == AxisKind::integer)
      v = std::round(v);
    else
      v = std::round(v * 1e12) / 1e12;
    if (levels.empty() || v > levels.back()) levels.push_back(v);
  }
  return levels;
}

inline FidelityAxis make_axis(std::string name, AxisKind kind, std::vector<double> levels) {
  FidelityAxis a{std::move(name), kind, std::move(levels)};
  validate_axis(a);
  return a;
}

inline FidelityAxis make_axis(std::string name, double min, double max, int count, Pattern pattern) {
  const AxisKind kind = default_kind(name);
  return make_axis(std::move(name), kind, discretize_axis(kind, min, max, count, pattern));
}

// Throws unless every value of `p` is a level of its axis and every axis is set.
inline void validate_point(const FidelityPoint& p, std::span<const FidelityAxis> axes) {
  for (const auto& [name, v] : p.values) {
    auto it = std::find_if(axes.begin(), axes.end(), [&](const FidelityAxis& a) { return a.name == name; });
    if (it == axes.end()) throw ConfigError("fidelity point uses undeclared axis '" + name + "'");
    if (!it->contains(v)) throw ConfigError("fidelity value " + std::to_string(v) + " is not a level of axis '" + name + "'");
  }
  for (const auto& a : axes)
    if (!p.has(a.name)) throw ConfigError("fidelity point is missing axis '" + a.name + "'");
}

inline FidelityPoint max_point(std::span<const FidelityAxis> axes) {
  FidelityPoint p;
  for (const auto& a : axes) p.values[a.name] = a.max();
  return p;
}

inline const FidelityAxis& find_axis(std::span<const FidelityAxis> axes, const std::string& name) {
  for (const auto& a : axes)
    if (a.name == name) return a;
  throw ConfigError("no fidelity axis named '" + name + "'");
}

}  // namespace freezehpo
