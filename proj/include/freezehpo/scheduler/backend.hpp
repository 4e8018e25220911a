#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "freezehpo/core/types.hpp"

namespace freezehpo {

struct EvalRequest {
  HyperparamConfig config;
  FidelityPoint fidelity;
  std::uint64_t seed = 0;
};

// Evaluates independent (config, fidelity, seed) tuples. Results come back
// in request order; a failed evaluation carries a non-empty `error`.
// Implementations must tolerate concurrent calls with distinct tuples.
class EvaluationBackend {
 public:
  virtual ~EvaluationBackend() = default;
  virtual std::vector<EvalRecord> evaluate(std::span<const EvalRequest> requests) = 0;
};

inline EvalRecord failed_record(const EvalRequest& req, std::string message) {
  EvalRecord r;
  r.config_id = req.config.id;
  r.fidelity = req.fidelity;
  r.seed = req.seed;
  r.diverged = true;
  r.objective = kDivergedObjective;
  r.error = std::move(message);
  return r;
}

// Lookup table of precomputed results keyed by (config id, fidelity); the
// seed is ignored. Unknown keys produce failed records.
class TabularBackend : public EvaluationBackend {
 public:
  TabularBackend() = default;
  explicit TabularBackend(std::span<const EvalRecord> records) {
    for (const auto& r : records) add(r);
  }

  void add(const EvalRecord& r) { table_[{r.config_id, r.fidelity.key()}] = r; }

  std::vector<EvalRecord> evaluate(std::span<const EvalRequest> requests) override {
    std::vector<EvalRecord> out;
    out.reserve(requests.size());
    for (const auto& req : requests) {
      auto it = table_.find({req.config.id, req.fidelity.key()});
      if (it == table_.end()) {
        out.push_back(failed_record(req, "no tabulated result for config " + std::to_string(req.config.id) + " at " +
                                             req.fidelity.key()));
        continue;
      }
      EvalRecord r = it->second;
      r.seed = req.seed;
      out.push_back(std::move(r));
    }
    ++calls_;
    return out;
  }

  std::size_t calls() const { return calls_; }

 private:
  std::map<std::pair<int, std::string>, EvalRecord> table_;
  std::size_t calls_ = 0;
};

}  // namespace freezehpo
