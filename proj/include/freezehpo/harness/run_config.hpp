#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "freezehpo/core/error.hpp"
#include "freezehpo/core/types.hpp"
#include "freezehpo/fidelity/axis.hpp"
#include "freezehpo/fidelity/search_space.hpp"
#include "freezehpo/freezer/cost_model.hpp"
#include "freezehpo/microtrainer/layer_spec.hpp"
#include "freezehpo/microtrainer/task.hpp"
#include "freezehpo/microtrainer/trainer.hpp"
#include "freezehpo/scheduler/memory_parallel.hpp"
#include "freezehpo/scheduler/successive_halving.hpp"

namespace freezehpo {

inline constexpr const char* kOutputDirEnv = "FREEZEHPO_OUTPUT_DIR";

struct ShSettings {
  double eta = 2.0;
  ShMode mode = ShMode::diagonal;
  int n_configs = 0;  // 0: the whole search space
  std::uint64_t seed = 0;
  std::string moving_axis = kDataAxis;
};

struct MemorySettings {
  std::optional<int> budget_units;
  std::optional<std::uint64_t> unit_bytes;
  std::map<int, int> job_units;  // explicit m(z); overrides estimates
};

struct RunConfig {
  TaskSpec task;
  Architecture architecture;
  SearchSpace search_space;
  std::vector<FidelityAxis> axes;  // always contains layers and data_fraction
  TrainBudget budget;
  ShSettings sh;
  std::optional<MemorySettings> memory;
  std::vector<std::uint64_t> seeds{0};
  std::string output_dir;

  const FidelityAxis& layers_axis() const { return find_axis(axes, kLayersAxis); }
  const FidelityAxis& data_axis() const { return find_axis(axes, kDataAxis); }
  int n_layers() const { return parametric_layer_count(architecture); }
};

namespace detail {

template <typename T>
T get_as(const json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  return get_as<T>(j, key, where);
}

inline TaskSpec parse_task(const json& j) {
  check_keys(j, {"name", "generator_seed", "train_size", "validation_size", "classes", "noise", "turns", "objective"}, "task");
  TaskSpec t;
  t.name = get_or<std::string>(j, "name", t.name, "task");
  t.generator_seed = get_or<std::uint64_t>(j, "generator_seed", t.generator_seed, "task");
  t.train_size = get_or<int>(j, "train_size", t.train_size, "task");
  t.validation_size = get_or<int>(j, "validation_size", t.validation_size, "task");
  t.classes = get_or<int>(j, "classes", t.classes, "task");
  t.noise = get_or<double>(j, "noise", t.noise, "task");
  t.turns = get_or<double>(j, "turns", t.turns, "task");
  t.objective = parse_objective(get_or<std::string>(j, "objective", "cross_entropy", "task"));
  return t;
}

inline Architecture parse_architecture(const json& j) {
  check_keys(j, {"input_dim", "layers"}, "architecture");
  int d = get_as<int>(j, "input_dim", "architecture");
  Architecture arch;
  const auto& layers = j.at("layers");
  if (!layers.is_array() || layers.empty()) throw ConfigError("architecture.layers must be a non-empty array");
  for (const auto& l : layers) {
    check_keys(l, {"units", "activation", "params"}, "architecture.layers[]");
    LayerSpec s;
    s.index = static_cast<int>(arch.size());
    s.activation = parse_activation(get_or<std::string>(l, "activation", "identity", "architecture.layers[]"));
    s.has_params = get_or<bool>(l, "params", true, "architecture.layers[]");
    s.d_in = d;
    s.d_out = s.has_params ? get_as<int>(l, "units", "architecture.layers[]") : get_or<int>(l, "units", d, "architecture.layers[]");
    arch.push_back(s);
    d = s.d_out;
  }
  validate_architecture(arch);
  return arch;
}

inline FidelityAxis parse_axis(const json& j, int n_layers) {
  check_keys(j, {"name", "levels", "pattern", "count", "min", "max"}, "fidelity.axes[]");
  const auto name = get_as<std::string>(j, "name", "fidelity.axes[]");
  if (name != kLayersAxis && name != kDataAxis)
    throw ConfigError("fidelity axis '" + name + "' is not supported (expected layers or data_fraction)");
  const bool layers = name == kLayersAxis;
  FidelityAxis axis;
  if (j.contains("levels")) {
    if (j.contains("pattern") || j.contains("count")) throw ConfigError("axis '" + name + "': give either levels or pattern/count");
    axis = make_axis(name, default_kind(name), get_as<std::vector<double>>(j, "levels", "fidelity.axes[]"));
  } else {
    const double lo = get_or<double>(j, "min", layers ? 1.0 : 0.125, "fidelity.axes[]");
    const double hi = get_or<double>(j, "max", layers ? static_cast<double>(n_layers) : 1.0, "fidelity.axes[]");
    const int count = get_or<int>(j, "count", layers ? static_cast<int>(hi - lo + 1) : 4, "fidelity.axes[]");
    const Pattern pattern = parse_pattern(get_or<std::string>(j, "pattern", "uniform", "fidelity.axes[]"));
    axis = count == 1 ? make_axis(name, default_kind(name), {hi}) : make_axis(name, lo, hi, count, pattern);
  }
  if (layers && axis.max() > n_layers)
    throw ConfigError("layers axis exceeds the " + std::to_string(n_layers) + " parametric layers of the architecture");
  return axis;
}

}  // namespace detail

// Strict parse: unknown keys anywhere are configuration errors.
inline RunConfig parse_run_config(const json& j) {
  using detail::check_keys;
  using detail::get_or;
  check_keys(j, {"task", "architecture", "search_space", "fidelity", "budget", "successive_halving", "memory", "seeds", "output_dir"},
             "run config");
  RunConfig cfg;
  cfg.task = detail::parse_task(j.value("task", json::object()));
  if (!j.contains("architecture")) throw ConfigError("run config: missing 'architecture'");
  cfg.architecture = detail::parse_architecture(j.at("architecture"));
  if (!j.contains("search_space")) throw ConfigError("run config: missing 'search_space'");
  try {
    cfg.search_space = j.at("search_space").get<SearchSpace>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("search_space: ") + e.what());
  }
  cfg.search_space.enumerate();

  const int n = cfg.n_layers();
  const json fid = j.value("fidelity", json::object());
  check_keys(fid, {"axes"}, "fidelity");
  for (const auto& a : fid.value("axes", json::array())) cfg.axes.push_back(detail::parse_axis(a, n));
  std::set<std::string> names;
  for (const auto& a : cfg.axes)
    if (!names.insert(a.name).second) throw ConfigError("fidelity axis '" + a.name + "' declared twice");
  if (!names.contains(kLayersAxis)) {
    std::vector<double> all;
    for (int z = 1; z <= n; ++z) all.push_back(z);
    cfg.axes.insert(cfg.axes.begin(), make_axis(kLayersAxis, AxisKind::integer, all));
  }
  if (!names.contains(kDataAxis)) cfg.axes.push_back(make_axis(kDataAxis, AxisKind::rational, {1.0}));
  std::sort(cfg.axes.begin(), cfg.axes.end(), [](const FidelityAxis& a, const FidelityAxis& b) {
    return (a.name == kLayersAxis) > (b.name == kLayersAxis);
  });
  if (cfg.data_axis().max() != 1.0) throw ConfigError("data_fraction axis must end at 1.0 (full budget)");
  if (cfg.layers_axis().max() != n) throw ConfigError("layers axis must end at the full layer count " + std::to_string(n));

  const json b = j.value("budget", json::object());
  check_keys(b, {"steps", "batch_size"}, "budget");
  cfg.budget.steps = get_or<int>(b, "steps", cfg.budget.steps, "budget");
  cfg.budget.batch_size = get_or<int>(b, "batch_size", cfg.budget.batch_size, "budget");
  validate_budget(cfg.budget);

  const json sh = j.value("successive_halving", json::object());
  check_keys(sh, {"eta", "mode", "n_configs", "seed", "moving_axis"}, "successive_halving");
  cfg.sh.eta = get_or<double>(sh, "eta", cfg.sh.eta, "successive_halving");
  cfg.sh.mode = parse_sh_mode(get_or<std::string>(sh, "mode", "diagonal", "successive_halving"));
  cfg.sh.n_configs = get_or<int>(sh, "n_configs", 0, "successive_halving");
  cfg.sh.seed = get_or<std::uint64_t>(sh, "seed", 0, "successive_halving");
  cfg.sh.moving_axis = get_or<std::string>(sh, "moving_axis", kDataAxis, "successive_halving");
  if (cfg.sh.n_configs < 0) throw ConfigError("successive_halving.n_configs must be >= 0");

  if (j.contains("memory")) {
    const json& m = j.at("memory");
    check_keys(m, {"budget_units", "unit_bytes", "job_units"}, "memory");
    MemorySettings ms;
    if (m.contains("budget_units")) ms.budget_units = detail::get_as<int>(m, "budget_units", "memory");
    if (m.contains("unit_bytes")) ms.unit_bytes = detail::get_as<std::uint64_t>(m, "unit_bytes", "memory");
    if (m.contains("job_units")) {
      for (const auto& [k, v] : m.at("job_units").items()) ms.job_units[std::stoi(k)] = v.get<int>();
    }
    cfg.memory = ms;
  }
  if (j.contains("seeds")) cfg.seeds = detail::get_as<std::vector<std::uint64_t>>(j, "seeds", "run config");
  if (cfg.seeds.empty()) throw ConfigError("seeds must not be empty");
  cfg.output_dir = get_or<std::string>(j, "output_dir", "", "run config");
  return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_run_config(j);
}

// --out flag, then the config's output_dir, then $FREEZEHPO_OUTPUT_DIR, then ./freezehpo-out.
inline std::filesystem::path resolve_output_dir(const RunConfig& cfg, const std::string& flag) {
  if (!flag.empty()) return flag;
  if (!cfg.output_dir.empty()) return cfg.output_dir;
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
  return "freezehpo-out";
}

// m(z) per layers level: explicit job_units, or ceil(peak_bytes(z) / unit)
// from the Adam cost estimate with unit defaulting to peak_bytes(z_min).
// The budget defaults to m(z_max).
inline MemoryModel build_memory_model(const RunConfig& cfg) {
  MemorySettings ms = cfg.memory.value_or(MemorySettings{});
  MemoryModel model;
  if (!ms.job_units.empty()) {
    model.job_units = ms.job_units;
  } else {
    std::map<int, std::uint64_t> peak;
    for (double z : cfg.layers_axis().levels) {
      const int zi = static_cast<int>(z);
      peak[zi] = estimate_cost(make_freeze_plan(cfg.architecture, zi), cfg.architecture, cfg.budget.batch_size,
                               OptimizerKind::adam).peak_bytes;
    }
    const std::uint64_t unit = ms.unit_bytes.value_or(peak.begin()->second);
    if (unit == 0) throw ConfigError("memory.unit_bytes must be positive");
    for (const auto& [z, bytes] : peak) model.job_units[z] = static_cast<int>((bytes + unit - 1) / unit);
  }
  model.budget = ms.budget_units.value_or(model.job_units.rbegin()->second);
  model.validate();
  return model;
}

inline ShConfig make_sh_config(const RunConfig& cfg) {
  ShConfig sh;
  sh.eta = cfg.sh.eta;
  sh.mode = cfg.sh.mode;
  sh.n_configs = cfg.sh.n_configs > 0 ? cfg.sh.n_configs : static_cast<int>(cfg.search_space.size());
  sh.axes = cfg.axes;
  sh.moving_axis = cfg.sh.moving_axis;
  sh.seed = cfg.sh.seed;
  return sh;
}

}  // namespace freezehpo
