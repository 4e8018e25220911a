#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <string>

#include "json.hpp"

#include "freezehpo/core/error.hpp"

namespace freezehpo {

using json = nlohmann::json;

inline constexpr double kDivergedObjective = std::numeric_limits<double>::infinity();

inline constexpr const char* kLayersAxis = "layers";
inline constexpr const char* kDataAxis = "data_fraction";

enum class OptimizerKind { sgd, sgd_momentum, adam };

// Optimizer state scalars kept per trainable parameter.
constexpr int state_scalars_per_param(OptimizerKind kind) noexcept {
  switch (kind) {
    case OptimizerKind::sgd: return 0;
    case OptimizerKind::sgd_momentum: return 1;
    case OptimizerKind::adam: return 2;
  }
  return 0;
}

// One point of the search space. `optimizer` is "adam" or "sgd"; for "sgd"
// beta1 is the momentum coefficient and beta1 == 0 means plain SGD.
struct HyperparamConfig {
  int id = 0;
  double learning_rate = 1e-2;
  double weight_decay = 0.0;
  std::string optimizer = "adam";
  double beta1 = 0.9;
  double beta2 = 0.999;
  double warmup_fraction = 0.0;
  double cooldown_fraction = 0.0;

  OptimizerKind optimizer_kind() const {
    if (optimizer == "adam") return OptimizerKind::adam;
    if (optimizer == "sgd") return beta1 > 0.0 ? OptimizerKind::sgd_momentum : OptimizerKind::sgd;
    throw ConfigError("unknown optimizer '" + optimizer + "' (expected adam or sgd)");
  }

  friend bool operator==(const HyperparamConfig&, const HyperparamConfig&) = default;
};

inline void to_json(json& j, const HyperparamConfig& c) {
  j = json{{"id", c.id},
           {"learning_rate", c.learning_rate},
           {"weight_decay", c.weight_decay},
           {"optimizer", c.optimizer},
           {"beta1", c.beta1},
           {"beta2", c.beta2},
           {"warmup_fraction", c.warmup_fraction},
           {"cooldown_fraction", c.cooldown_fraction}};
}

inline void from_json(const json& j, HyperparamConfig& c) {
  HyperparamConfig d;
  c.id = j.value("id", d.id);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.weight_decay = j.value("weight_decay", d.weight_decay);
  c.optimizer = j.value("optimizer", d.optimizer);
  c.beta1 = j.value("beta1", d.beta1);
  c.beta2 = j.value("beta2", d.beta2);
  c.warmup_fraction = j.value("warmup_fraction", d.warmup_fraction);
  c.cooldown_fraction = j.value("cooldown_fraction", d.cooldown_fraction);
}

// Values over named fidelity axes ("layers", "data_fraction", ...).
struct FidelityPoint {
  std::map<std::string, double> values;

  bool has(const std::string& axis) const { return values.contains(axis); }

  double at(const std::string& axis) const {
    auto it = values.find(axis);
    if (it == values.end()) throw UsageError("fidelity point has no axis '" + axis + "'");
    return it->second;
  }

  int layers() const { return static_cast<int>(std::lround(at(kLayersAxis))); }
  double data_fraction() const { return has(kDataAxis) ? at(kDataAxis) : 1.0; }

  FidelityPoint with(const std::string& axis, double v) const {
    FidelityPoint p = *this;
    p.values[axis] = v;
    return p;
  }

  // Canonical text form; used in resume keys and table labels.
  std::string key() const {
    std::string out;
    for (const auto& [name, v] : values) {
      if (!out.empty()) out += ',';
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out += name + '=' + buf;
    }
    return out;
  }

  friend bool operator==(const FidelityPoint&, const FidelityPoint&) = default;
  friend auto operator<=>(const FidelityPoint& a, const FidelityPoint& b) { return a.values <=> b.values; }
};

inline void to_json(json& j, const FidelityPoint& p) {
  j = json::object();
  for (const auto& [name, v] : p.values) {
    if (name == kLayersAxis)
      j[name] = static_cast<std::int64_t>(std::llround(v));
    else
      j[name] = v;
  }
}

inline void from_json(const json& j, FidelityPoint& p) {
  if (!j.is_object()) throw ConfigError("fidelity must be a JSON object");
  p.values.clear();
  for (const auto& [name, v] : j.items()) {
    if (!v.is_number()) throw ConfigError("fidelity axis '" + name + "' must be numeric");
    p.values[name] = v.get<double>();
  }
}

struct CostRecord {
  std::uint64_t flops = 0;
  std::uint64_t peak_bytes = 0;
  double wall_ms = 0.0;

  friend bool operator==(const CostRecord&, const CostRecord&) = default;
};

inline void to_json(json& j, const CostRecord& c) {
  j = json{{"flops", c.flops}, {"peak_bytes", c.peak_bytes}, {"wall_ms", c.wall_ms}};
}

inline void from_json(const json& j, CostRecord& c) {
  c.flops = j.value("flops", std::uint64_t{0});
  c.peak_bytes = j.value("peak_bytes", std::uint64_t{0});
  c.wall_ms = j.value("wall_ms", 0.0);
}

// Outcome of evaluating one config at one fidelity with one seed.
// Lower objective is better; diverged runs carry kDivergedObjective.
struct EvalRecord {
  int config_id = 0;
  FidelityPoint fidelity;
  std::uint64_t seed = 0;
  double objective = kDivergedObjective;
  bool diverged = true;
  CostRecord cost;
  int steps = 0;       // optimizer steps actually executed
  int batch_size = 0;
  std::string error;   // backend failure text; empty on success

  double ranking_objective() const { return diverged ? kDivergedObjective : objective; }
};

inline void to_json(json& j, const EvalRecord& r) {
  j = json{{"config_id", r.config_id},
           {"fidelity", r.fidelity},
           {"seed", r.seed},
           {"objective", (r.diverged || !std::isfinite(r.objective)) ? json(nullptr) : json(r.objective)},
           {"diverged", r.diverged},
           {"cost", r.cost},
           {"steps", r.steps},
           {"batch_size", r.batch_size}};
  if (!r.error.empty()) j["error"] = r.error;
}

inline void from_json(const json& j, EvalRecord& r) {
  r.config_id = j.at("config_id").get<int>();
  r.fidelity = j.at("fidelity").get<FidelityPoint>();
  r.seed = j.value("seed", std::uint64_t{0});
  const auto& obj = j.at("objective");
  r.diverged = j.value("diverged", obj.is_null());
  r.objective = (obj.is_null() || r.diverged) ? kDivergedObjective : obj.get<double>();
  r.cost = j.value("cost", CostRecord{});
  r.steps = j.value("steps", 0);
  r.batch_size = j.value("batch_size", 0);
  r.error = j.value("error", std::string{});
}

// Total order used for promotion and ranking: finite objectives ascending,
// diverged runs last, ties broken by lower config id.
inline bool ranks_before(const EvalRecord& a, const EvalRecord& b) {
  if (a.diverged != b.diverged) return !a.diverged;
  if (!a.diverged && a.objective != b.objective) return a.objective < b.objective;
  return a.config_id < b.config_id;
}

}  // namespace freezehpo
