#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "freezehpo/core/types.hpp"
#include "freezehpo/microtrainer/optimizer.hpp"

namespace freezehpo {

struct TrainBudget {
  int steps = 100;
  int batch_size = 32;
  double sample_fraction = 1.0;
};

// Number of optimizer steps that consume `fraction` of the training stream.
inline int steps_for_fraction(int steps, double fraction) {
  return std::max(1, static_cast<int>(std::llround(fraction * static_cast<double>(steps))));
}

inline void validate_budget(const TrainBudget& b) {
  if (b.steps < 1) throw ConfigError("budget.steps must be >= 1");
  if (b.batch_size < 1) throw ConfigError("budget.batch_size must be >= 1");
  if (!(b.sample_fraction > 0.0 && b.sample_fraction <= 1.0)) throw ConfigError("sample_fraction must lie in (0, 1]");
}

// Owns one network under one freeze plan together with its gradient and
// optimizer buffers. Everything persistent is registered with the tracker:
// all parameters, gradients and optimizer state of trainable layers.
class TrainingSession {
 public:
  TrainingSession(Network net, FreezePlan plan, const HyperparamConfig& hp, Objective objective)
      : net_(std::move(net)),
        plan_(std::move(plan)),
        objective_(objective),
        grads_(net_, plan_, &tracker_),
        optimizer_(net_, plan_, hp, &tracker_),
        propagator_(net_, plan_, &tracker_, &flops_) {
    tracker_.acquire(static_cast<std::size_t>(net_.parameter_count()));
  }
  ~TrainingSession() { tracker_.release(static_cast<std::size_t>(net_.parameter_count())); }
  TrainingSession(const TrainingSession&) = delete;
  TrainingSession& operator=(const TrainingSession&) = delete;

  // One forward + backward + optimizer step. A non-finite loss skips the
  // update and is returned as is.
  double step(const Batch& batch, double lr) {
    const auto& out = propagator_.forward(batch.inputs, batch.size);
    TrackedBuffer grad(&tracker_, out.size());
    const double loss = loss_and_grad(out.vec(), batch, objective_, grad.vec());
    if (!std::isfinite(loss)) return loss;
    propagator_.backward(std::move(grad), grads_);
    optimizer_.step(net_, grads_, lr);
    return loss;
  }

  const Network& network() const { return net_; }
  const FreezePlan& plan() const { return plan_; }
  MemoryTracker& tracker() { return tracker_; }
  FlopCounter& flops() { return flops_; }
  const Gradients& gradients() const { return grads_; }
  std::size_t optimizer_state_scalars() const { return optimizer_.state_scalars(); }

 private:
  MemoryTracker tracker_;
  FlopCounter flops_;
  Network net_;
  FreezePlan plan_;
  Objective objective_;
  Gradients grads_;
  Optimizer optimizer_;
  Propagator propagator_;
};

struct TrainOutcome {
  Network network;
  EvalRecord record;                    // at budget.sample_fraction
  std::vector<EvalRecord> checkpoints;  // one per requested fraction, ascending
  std::size_t optimizer_state_scalars = 0;
  std::size_t gradient_buffers = 0;
};

// Trains the trainable suffix of `initial` on a prefix of the shuffled
// training stream. The learning-rate schedule always spans budget.steps, so
// a run at fraction f is the same trajectory as the first f of a full run;
// `checkpoint_fractions` snapshots the validation objective along the way.
inline TrainOutcome train(const Network& initial, const Task& task, const HyperparamConfig& hp, const FreezePlan& plan,
                          const TrainBudget& budget, std::uint64_t data_seed,
                          std::span<const double> checkpoint_fractions = {}) {
  validate_budget(budget);
  std::vector<double> fractions(checkpoint_fractions.begin(), checkpoint_fractions.end());
  std::sort(fractions.begin(), fractions.end());
  for (double f : fractions)
    if (!(f > 0.0 && f <= budget.sample_fraction))
      throw ConfigError("checkpoint fraction outside (0, sample_fraction]");

  TrainingSession session(initial, plan, hp, task.objective());
  SampleStream stream(task.train.size(), data_seed);
  const int run_steps = steps_for_fraction(budget.steps, budget.sample_fraction);

  auto make_record = [&](double fraction, int steps_done, double objective, bool diverged, double wall_ms) {
    EvalRecord r;
    r.config_id = hp.id;
    r.fidelity.values = {{kLayersAxis, static_cast<double>(plan.z())}, {kDataAxis, fraction}};
    r.seed = initial.init_seed();
    r.diverged = diverged || !std::isfinite(objective);
    r.objective = r.diverged ? kDivergedObjective : objective;
    r.cost = {session.flops().total(), session.tracker().peak_bytes(), wall_ms};
    r.steps = steps_done;
    r.batch_size = budget.batch_size;
    return r;
  };

  TrainOutcome out{initial, {}, {}, session.optimizer_state_scalars(), session.gradients().buffer_count()};
  std::size_t next_ckpt = 0;
  bool diverged = false;
  double wall_ms = 0.0;
  int done = 0;
  auto emit_due_checkpoints = [&] {
    while (next_ckpt < fractions.size() &&
           (diverged || steps_for_fraction(budget.steps, fractions[next_ckpt]) <= done)) {
      const double obj = diverged ? kDivergedObjective
                                  : evaluate_loss(session.network(), task.validation, task.objective());
      out.checkpoints.push_back(make_record(fractions[next_ckpt], done, obj, diverged, wall_ms));
      ++next_ckpt;
    }
  };

  for (; done < run_steps && !diverged;) {
    const auto t0 = std::chrono::steady_clock::now();
    const Batch batch = gather(task.train, stream.next(static_cast<std::size_t>(budget.batch_size)));
    const double loss = session.step(batch, scheduled_lr(hp, done, budget.steps));
    wall_ms += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (!std::isfinite(loss)) {
      diverged = true;
      break;
    }
    ++done;
    emit_due_checkpoints();
  }
  emit_due_checkpoints();

  const double final_obj = diverged ? kDivergedObjective
                                    : evaluate_loss(session.network(), task.validation, task.objective());
  out.record = make_record(budget.sample_fraction, done, final_obj, diverged, wall_ms);
  out.network = session.network();
  return out;
}

}  // namespace freezehpo
