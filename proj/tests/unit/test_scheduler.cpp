#include <catch_amalgamated.hpp>

#include <algorithm>
#include <numeric>
#include <set>

#include "freezehpo/core/rng.hpp"
#include "freezehpo/scheduler/backend.hpp"
#include "freezehpo/scheduler/memory_parallel.hpp"
#include "freezehpo/scheduler/successive_halving.hpp"

using namespace freezehpo;
using Catch::Matchers::ContainsSubstring;

namespace {

std::vector<FidelityAxis> two_axes(std::vector<double> layers = {1, 2, 5, 10},
                                   std::vector<double> data = {0.125, 0.25, 0.5, 1.0}) {
  return {make_axis(kLayersAxis, AxisKind::integer, std::move(layers)),
          make_axis(kDataAxis, AxisKind::rational, std::move(data))};
}

std::vector<HyperparamConfig> configs(int n) {
  std::vector<HyperparamConfig> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)].id = i;
    out[static_cast<std::size_t>(i)].learning_rate = 1e-3 * (i + 1);
  }
  return out;
}

EvalRecord tab(int id, const FidelityPoint& p, double objective, bool diverged = false, std::uint64_t flops = 1) {
  EvalRecord r;
  r.config_id = id;
  r.fidelity = p;
  r.objective = diverged ? kDivergedObjective : objective;
  r.diverged = diverged;
  r.cost.flops = flops;
  return r;
}

// Reference synchronous SH written directly from the promotion rule.
int reference_winner(const std::vector<RungSkeleton>& schedule, const std::map<std::pair<int, std::string>, EvalRecord>& table,
                     int n) {
  std::vector<int> alive(static_cast<std::size_t>(n));
  std::iota(alive.begin(), alive.end(), 0);
  for (std::size_t r = 0; r < schedule.size(); ++r) {
    const auto key = schedule[r].fidelity.key();
    auto score = [&](int id) {
      const auto& rec = table.at({id, key});
      return std::make_tuple(rec.diverged ? 1 : 0, rec.diverged ? 0.0 : rec.objective, id);
    };
    std::sort(alive.begin(), alive.end(), [&](int a, int b) { return score(a) < score(b); });
    const std::size_t keep = r + 1 < schedule.size() ? static_cast<std::size_t>(schedule[r + 1].size) : 1;
    alive.resize(std::min(alive.size(), keep));
  }
  return alive.front();
}

MemoryModel fig_model() { return MemoryModel{{{1, 1}, {2, 2}, {4, 4}}, 4}; }

FidelityPoint at_layers(int z) { return FidelityPoint{{{kLayersAxis, static_cast<double>(z)}}}; }

double fig_time(const FidelityPoint& p) { return static_cast<double>(p.layers()); }

}  // namespace

TEST_CASE("rung sizes shrink by eta with a floor of one", "[sh]") {
  ShConfig cfg;
  cfg.eta = 2;
  cfg.n_configs = 8;
  cfg.axes = two_axes();
  std::vector<int> sizes;
  for (const auto& s : sh_schedule(cfg)) sizes.push_back(s.size);
  CHECK(sizes == std::vector<int>{8, 4, 2, 1});

  cfg.eta = 4;
  cfg.n_configs = 16;
  cfg.axes = two_axes({1, 2, 4}, {0.25, 0.5, 1.0});
  sizes.clear();
  for (const auto& s : sh_schedule(cfg)) sizes.push_back(s.size);
  CHECK(sizes == std::vector<int>{16, 4, 1});

  CHECK(next_rung_size(1, 3) == 1);
  CHECK(next_rung_size(5, 2) == 2);
}

TEST_CASE("diagonal schedule walks every axis together", "[sh]") {
  ShConfig cfg;
  cfg.mode = ShMode::diagonal;
  cfg.n_configs = 8;
  cfg.axes = two_axes();
  const auto s = sh_schedule(cfg);
  REQUIRE(s.size() == 4);
  const std::vector<std::pair<int, double>> want{{1, 0.125}, {2, 0.25}, {5, 0.5}, {10, 1.0}};
  for (std::size_t r = 0; r < 4; ++r) {
    CHECK(s[r].fidelity.layers() == want[r].first);
    CHECK(s[r].fidelity.at(kDataAxis) == want[r].second);
  }
}

TEST_CASE("single-axis schedule pins the other axes at their maxima", "[sh]") {
  ShConfig cfg;
  cfg.n_configs = 8;
  cfg.axes = two_axes();
  for (const auto& s : sh_schedule(cfg)) CHECK(s.fidelity.layers() == 10);
  cfg.moving_axis = kLayersAxis;
  for (const auto& s : sh_schedule(cfg)) CHECK(s.fidelity.at(kDataAxis) == 1.0);
}

TEST_CASE("diagonal mode rejects axes of unequal length", "[sh]") {
  ShConfig cfg;
  cfg.mode = ShMode::diagonal;
  cfg.n_configs = 8;
  cfg.axes = two_axes({1, 2, 3}, {0.125, 0.25, 0.5, 1.0});
  CHECK_THROWS_WITH(sh_schedule(cfg), ContainsSubstring("same number of levels (layers: 3, data_fraction: 4)"));
}

TEST_CASE("schedule preconditions", "[sh]") {
  ShConfig cfg;
  cfg.axes = two_axes();
  cfg.n_configs = 1;
  CHECK_THROWS_AS(sh_schedule(cfg), ConfigError);
  cfg.n_configs = 8;
  cfg.eta = 1.0;
  CHECK_THROWS_AS(sh_schedule(cfg), ConfigError);
  CHECK_THROWS_AS(parse_sh_mode("bohb"), ConfigError);
}

TEST_CASE("ties promote the lower config id", "[sh]") {
  std::vector<EvalRecord> r{tab(3, {}, 0.5), tab(1, {}, 0.5), tab(2, {}, 0.1), tab(0, {}, 0.0, true)};
  CHECK(promote(r, 2) == std::vector<int>{2, 1});
  CHECK(promote(r, 4) == std::vector<int>{2, 1, 3, 0});
}

TEST_CASE("successive halving matches a reference on random tables", "[sh][property]") {
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 8 + static_cast<int>(rng.below(25));
    const double eta = trial % 2 == 0 ? 2.0 : 3.0;
    ShConfig cfg;
    cfg.eta = eta;
    cfg.n_configs = n;
    cfg.mode = trial % 4 < 2 ? ShMode::diagonal : ShMode::single_axis;
    cfg.axes = two_axes();
    const auto schedule = sh_schedule(cfg);
    std::map<std::pair<int, std::string>, EvalRecord> table;
    TabularBackend backend;
    for (const auto& rung : schedule)
      for (int id = 0; id < n; ++id) {
        // Coarse values force ties; a few divergences exercise the ordering.
        const bool diverged = rng.below(10) == 0;
        const auto rec = tab(id, rung.fidelity, std::round(rng.uniform(0, 8)) / 8.0, diverged);
        table[{id, rung.fidelity.key()}] = rec;
        backend.add(rec);
      }
    const auto cs = configs(n);
    ShOptions opts;
    opts.mode = cfg.mode;
    const auto trace = run_sh(schedule, cs, backend, nullptr, opts);
    CHECK(trace.winner_id == reference_winner(schedule, table, n));
    REQUIRE(trace.rungs.size() == schedule.size());
    for (std::size_t r = 0; r < schedule.size(); ++r) {
      CHECK(static_cast<int>(trace.rungs[r].evaluated.size()) == schedule[r].size);
      if (r + 1 < schedule.size()) {
        CHECK(static_cast<double>(trace.rungs[r + 1].evaluated.size()) ==
              std::max(1.0, std::floor(static_cast<double>(trace.rungs[r].evaluated.size()) / eta)));
        const std::set<int> prev(trace.rungs[r].evaluated.begin(), trace.rungs[r].evaluated.end());
        for (int id : trace.rungs[r + 1].evaluated) CHECK(prev.count(id) == 1);
      } else {
        CHECK(trace.rungs[r].promoted.empty());
      }
    }
    const auto& top = trace.rungs.back().results;
    CHECK(trace.winner_id == std::min_element(top.begin(), top.end(), ranks_before)->config_id);
  }
}

TEST_CASE("cumulative flops sum every evaluation", "[sh]") {
  ShConfig cfg;
  cfg.n_configs = 8;
  cfg.axes = two_axes();
  const auto schedule = sh_schedule(cfg);
  TabularBackend backend;
  for (const auto& rung : schedule)
    for (int id = 0; id < 8; ++id) backend.add(tab(id, rung.fidelity, id * 0.1, false, 10 + static_cast<std::uint64_t>(rung.level)));
  const auto trace = run_sh(schedule, configs(8), backend);
  CHECK(trace.rungs.back().cumulative_flops == 8 * 10 + 4 * 11 + 2 * 12 + 1 * 13);
  CHECK(trace.winner_id == 0);
  CHECK(trace.rungs.front().promoted == std::vector<int>{0, 1, 2, 3});
}

TEST_CASE("backend failures become diverged records", "[sh]") {
  ShConfig cfg;
  cfg.n_configs = 4;
  cfg.axes = two_axes();
  const auto schedule = sh_schedule(cfg);
  TabularBackend backend;
  for (const auto& rung : schedule)
    for (int id = 1; id < 4; ++id) backend.add(tab(id, rung.fidelity, 1.0 - id * 0.1));
  const auto trace = run_sh(schedule, configs(4), backend);
  const auto& first = trace.rungs.front().results.front();
  CHECK(first.config_id == 0);
  CHECK(first.diverged);
  CHECK_THAT(first.error, ContainsSubstring("no tabulated result"));
  CHECK(trace.winner_id == 3);
}

TEST_CASE("run_sh rejects mismatched inputs", "[sh]") {
  ShConfig cfg;
  cfg.n_configs = 4;
  cfg.axes = two_axes();
  const auto schedule = sh_schedule(cfg);
  TabularBackend backend;
  CHECK_THROWS_AS(run_sh(schedule, configs(5), backend), ConfigError);
  auto dup = configs(4);
  dup[3].id = 0;
  CHECK_THROWS_WITH(run_sh(schedule, dup, backend), ContainsSubstring("duplicate config id"));
}

TEST_CASE("memory-parallel waves for the 16-4-1 plan", "[memory]") {
  const auto model = fig_model();
  std::vector<int> ids16(16), ids4{0, 1, 2, 3}, ids1{0};
  std::iota(ids16.begin(), ids16.end(), 0);
  const auto w1 = plan_memory_parallel(ids16, at_layers(1), model);
  const auto w2 = plan_memory_parallel(ids4, at_layers(2), model);
  const auto w3 = plan_memory_parallel(ids1, at_layers(4), model);
  CHECK(w1.size() == 4);
  for (const auto& w : w1) CHECK(w.config_ids.size() == 4);
  CHECK(w2.size() == 2);
  for (const auto& w : w2) CHECK(w.config_ids.size() == 2);
  CHECK(w3.size() == 1);
  CHECK(w3.front().config_ids.size() == 1);

  std::vector<ExecutionWave> all;
  for (const auto* w : {&w1, &w2, &w3}) all.insert(all.end(), w->begin(), w->end());
  CHECK(simulate_makespan(all, fig_time) == 12.0);

  std::vector<ExecutionWave> seq;
  for (const auto& [ids, z] : std::vector<std::pair<std::vector<int>, int>>{{ids16, 1}, {ids4, 2}, {ids1, 4}}) {
    const auto w = plan_sequential(ids, at_layers(z), model);
    seq.insert(seq.end(), w.begin(), w.end());
  }
  CHECK(seq.size() == 21);
  CHECK(simulate_makespan(seq, fig_time) == 28.0);
}

TEST_CASE("empty wave list has zero makespan", "[memory]") {
  CHECK(simulate_makespan(std::vector<ExecutionWave>{}, fig_time) == 0.0);
  CHECK(plan_memory_parallel(std::vector<int>{}, at_layers(1), fig_model()).empty());
}

TEST_CASE("jobs larger than the budget name the minimum budget", "[memory]") {
  MemoryModel m{{{1, 3}}, 2};
  CHECK_THROWS_WITH(plan_memory_parallel(std::vector<int>{0}, at_layers(1), m), ContainsSubstring("minimum budget 3"));
  MemoryModel bad{{{1, 3}, {2, 2}}, 4};
  CHECK_NOTHROW(MemoryModel{{{1, 2}, {2, 2}}, 4}.validate());
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(fig_model().units_for(at_layers(3)), ConfigError);
}

TEST_CASE("wave packing is sound", "[memory][property]") {
  Rng rng(9);
  for (int trial = 0; trial < 300; ++trial) {
    MemoryModel model;
    int units = 0;
    for (int z = 1; z <= 4; ++z) model.job_units[z] = units += 1 + static_cast<int>(rng.below(3));
    model.budget = model.job_units[4] + static_cast<int>(rng.below(10));
    const int z = 1 + static_cast<int>(rng.below(4));
    std::vector<int> ids(rng.below(40));
    std::iota(ids.begin(), ids.end(), 100);
    const auto waves = plan_memory_parallel(ids, at_layers(z), model, 7);
    const std::size_t per = static_cast<std::size_t>(model.budget / model.job_units[z]);
    CHECK(waves.size() == (ids.size() + per - 1) / per);
    std::vector<int> seen;
    for (std::size_t k = 0; k < waves.size(); ++k) {
      CHECK(waves[k].index == 7 + static_cast<int>(k));
      CHECK(waves[k].memory_used <= model.budget);
      CHECK(waves[k].memory_used == model.job_units[z] * static_cast<int>(waves[k].config_ids.size()));
      seen.insert(seen.end(), waves[k].config_ids.begin(), waves[k].config_ids.end());
    }
    CHECK(seen == ids);
  }
}

TEST_CASE("memory-packed SH records waves and keeps the trace", "[sh][memory]") {
  ShConfig cfg;
  cfg.mode = ShMode::diagonal;
  cfg.eta = 4;
  cfg.n_configs = 16;
  cfg.axes = {make_axis(kLayersAxis, AxisKind::integer, {1, 2, 4})};
  const auto schedule = sh_schedule(cfg);
  TabularBackend backend;
  for (const auto& rung : schedule)
    for (int id = 0; id < 16; ++id) backend.add(tab(id, rung.fidelity, (id * 7 % 16) / 16.0));
  const auto plain = run_sh(schedule, configs(16), backend);
  ShOptions opts;
  opts.memory = fig_model();
  const auto packed = run_sh(schedule, configs(16), backend, nullptr, opts);
  CHECK(packed.winner_id == plain.winner_id);
  std::vector<std::size_t> waves;
  for (const auto& r : packed.rungs) waves.push_back(r.waves.size());
  CHECK(waves == std::vector<std::size_t>{4, 2, 1});
  std::vector<ExecutionWave> all;
  for (const auto& r : packed.rungs) all.insert(all.end(), r.waves.begin(), r.waves.end());
  CHECK(simulate_makespan(all, fig_time) == 12.0);
}

TEST_CASE("observer lookups skip evaluation", "[sh]") {
  struct Cache : ShObserver {
    std::map<std::string, EvalRecord> seen;
    int evals = 0;
    std::optional<EvalRecord> lookup(int id, const FidelityPoint& p, std::uint64_t) override {
      auto it = seen.find(std::to_string(id) + p.key());
      if (it == seen.end()) return std::nullopt;
      return it->second;
    }
    void on_eval(const EvalRecord& r) override {
      ++evals;
      seen[std::to_string(r.config_id) + r.fidelity.key()] = r;
    }
  } cache;
  ShConfig cfg;
  cfg.n_configs = 8;
  cfg.axes = two_axes();
  const auto schedule = sh_schedule(cfg);
  TabularBackend backend;
  for (const auto& rung : schedule)
    for (int id = 0; id < 8; ++id) backend.add(tab(id, rung.fidelity, 1.0 / (id + 1)));
  const auto a = run_sh(schedule, configs(8), backend, &cache);
  const std::size_t calls = backend.calls();
  const auto b = run_sh(schedule, configs(8), backend, &cache);
  CHECK(cache.evals == 15);
  CHECK(backend.calls() == calls);
  CHECK(a.winner_id == b.winner_id);
  CHECK(a.winner_id == 7);
}
