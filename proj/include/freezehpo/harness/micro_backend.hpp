#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "freezehpo/core/error.hpp"
#include "freezehpo/core/parallel.hpp"
#include "freezehpo/core/rng.hpp"
#include "freezehpo/core/types.hpp"
#include "freezehpo/harness/run_config.hpp"
#include "freezehpo/microtrainer/layer_spec.hpp"
#include "freezehpo/microtrainer/network.hpp"
#include "freezehpo/microtrainer/task.hpp"
#include "freezehpo/microtrainer/trainer.hpp"
#include "freezehpo/scheduler/backend.hpp"

namespace freezehpo {

// Stream of the training-data order for an evaluation seed. The init stream
// is the seed itself.
inline std::uint64_t data_seed_for(std::uint64_t seed) { return mix_seed(seed, 1); }

inline const std::vector<std::string>& micro_backend_axes() {
  static const std::vector<std::string> axes{kLayersAxis, kDataAxis};
  return axes;
}

// Rejects fidelity axes outside `supported` with an "unsupported axis" message.
inline void check_supported_axes(const FidelityPoint& f, std::span<const std::string> supported) {
  for (const auto& [name, v] : f.values) {
    bool ok = false;
    for (const auto& s : supported) ok = ok || s == name;
    if (!ok) throw ConfigError("unsupported axis '" + name + "'");
  }
}

// Trains the built-in network in-process. A missing layers value means all
// layers; a missing data_fraction means the full budget.
class MicroBackend : public EvaluationBackend {
 public:
  MicroBackend(Task task, Architecture arch, TrainBudget budget, int jobs = 1)
      : task_(std::move(task)), arch_(std::move(arch)), budget_(budget), jobs_(jobs < 1 ? 1 : jobs) {
    validate_architecture(arch_);
    validate_budget(budget_);
  }

  static MicroBackend from_config(const RunConfig& cfg, int jobs = 1) {
    return MicroBackend(make_task(cfg.task), cfg.architecture, cfg.budget, jobs);
  }

  const Architecture& architecture() const { return arch_; }
  const Task& task() const { return task_; }
  const TrainBudget& budget() const { return budget_; }
  int n_layers() const { return parametric_layer_count(arch_); }

  std::vector<EvalRecord> evaluate(std::span<const EvalRequest> requests) override {
    std::vector<EvalRecord> out(requests.size());
    parallel_for(requests.size(), jobs_, [&](std::size_t i) { out[i] = evaluate_one(requests[i]); });
    return out;
  }

  // Never throws; failures are returned as records carrying `error`.
  EvalRecord evaluate_one(const EvalRequest& req, const std::optional<TrainBudget>& budget = std::nullopt) const {
    try {
      check_supported_axes(req.fidelity, micro_backend_axes());
      TrainBudget b = budget.value_or(budget_);
      b.sample_fraction = req.fidelity.data_fraction();
      const int z = req.fidelity.has(kLayersAxis) ? req.fidelity.layers() : n_layers();
      const Network net = Network::init(arch_, req.seed);
      TrainOutcome res = train(net, task_, req.config, make_freeze_plan(arch_, z), b, data_seed_for(req.seed));
      res.record.fidelity = req.fidelity;
      return res.record;
    } catch (const std::exception& e) {
      return failed_record(req, e.what());
    }
  }

  // One training at full data with validation snapshots at each fraction;
  // records equal those of separate runs at each fraction up to wall time.
  std::vector<EvalRecord> evaluate_levels(const HyperparamConfig& config, int z, std::uint64_t seed,
                                          std::span<const double> fractions) const {
    TrainBudget b = budget_;
    b.sample_fraction = 1.0;
    const Network net = Network::init(arch_, seed);
    TrainOutcome res = train(net, task_, config, make_freeze_plan(arch_, z), b, data_seed_for(seed), fractions);
    return res.checkpoints;
  }

 private:
  Task task_;
  Architecture arch_;
  TrainBudget budget_;
  int jobs_;
};

}  // namespace freezehpo
