#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "freezehpo/analysis/report.hpp"
#include "freezehpo/core/error.hpp"
#include "freezehpo/freezer/cost_model.hpp"
#include "freezehpo/freezer/freeze_plan.hpp"
#include "freezehpo/freezer/measure.hpp"
#include "freezehpo/freezer/module_tree.hpp"
#include "freezehpo/harness/micro_backend.hpp"
#include "freezehpo/harness/pipelines.hpp"
#include "freezehpo/harness/protocol.hpp"
#include "freezehpo/harness/run_config.hpp"
#include "freezehpo/harness/store.hpp"
#include "freezehpo/harness/sweep.hpp"
#include "freezehpo/harness/worker_client.hpp"

namespace freezehpo::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitConfig = 2;

struct Streams {
  std::istream& in = std::cin;
  std::ostream& out = std::cout;
  std::ostream& err = std::cerr;
};

namespace detail {

struct LoadedConfig {
  RunConfig cfg;
  json raw;
};

inline LoadedConfig load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config " + path);
  json raw = json::parse(f, nullptr, false);
  if (raw.is_discarded()) throw ConfigError("config " + path + " is not valid JSON");
  return {parse_run_config(raw), raw};
}

// The resume key excludes budget, task and architecture, so a directory is
// bound to them on first use.
inline void bind_run_directory(const std::filesystem::path& dir, const json& raw) {
  std::filesystem::create_directories(dir);
  const json fingerprint{{"task", raw.value("task", json::object())},
                         {"architecture", raw.at("architecture")},
                         {"budget", raw.value("budget", json::object())}};
  const auto path = dir / "run.json";
  if (std::filesystem::exists(path)) {
    std::ifstream f(path);
    const json old = json::parse(f, nullptr, false);
    if (old != fingerprint)
      throw ConfigError("output directory " + dir.string() +
                        " holds a run with a different task, architecture or budget; use a new output directory");
    return;
  }
  std::ofstream f(path);
  f << fingerprint.dump(2) << "\n";
  if (!f) throw IoError("cannot write " + path.string());
}

inline std::vector<std::string> split_command(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

inline void write_json(const std::filesystem::path& p, const json& j) {
  std::ofstream f(p);
  f << j.dump(2) << "\n";
  if (!f) throw IoError("cannot write " + p.string());
}

inline std::vector<EvalRecord> ensure_sweep(const LoadedConfig& lc, const std::filesystem::path& dir, int jobs,
                                            std::ostream& err) {
  bind_run_directory(dir, lc.raw);
  ResultStore store(dir / "sweep.jsonl");
  const auto backend = MicroBackend::from_config(lc.cfg, jobs);
  const auto s = run_sweep(lc.cfg, backend, store, {jobs, std::nullopt, {}});
  if (s.trained > 0) err << "sweep: trained " << s.trained << " of " << s.units << " units\n";
  return sweep_records(lc.cfg, store);
}

}  // namespace detail

// Returns the process exit status; never throws.
inline int run(int argc, const char* const* argv, Streams io = {}) {
  CLI::App app{"Multi-fidelity hyperparameter optimization with layer freezing"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  std::string config_path;
  std::string out_dir;
  int jobs = 1;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "Run configuration (JSON)")->required();
    sub->add_option("-o,--out", out_dir, "Output directory (default: config output_dir, $FREEZEHPO_OUTPUT_DIR, ./freezehpo-out)");
    sub->add_option("-j,--jobs", jobs, "Concurrent trainings")->check(CLI::PositiveNumber);
  };

  auto* sweep = app.add_subcommand("sweep", "Evaluate the full config grid at every fidelity and seed");
  add_common(sweep);
  std::optional<std::size_t> max_units;
  sweep->add_option("--max-units", max_units, "Stop after training this many units");

  auto* sh = app.add_subcommand("sh", "Run a successive-halving schedule");
  add_common(sh);
  std::optional<std::string> mode;
  std::optional<double> eta;
  std::optional<int> n_configs;
  bool memory_parallel = false;
  std::string worker_cmd;
  sh->add_option("--mode", mode, "diagonal or single_axis");
  sh->add_option("--eta", eta, "Reduction factor");
  sh->add_option("--n-configs", n_configs, "Configs in the first rung");
  sh->add_flag("--memory-parallel", memory_parallel, "Pack rungs into memory-bounded waves");
  sh->add_option("--worker", worker_cmd, "External worker command speaking the wire protocol");

  auto* validate = app.add_subcommand("validate-fidelity", "Check cost and rank-correlation monotonicity of the layer axis");
  add_common(validate);
  double tolerance = 0.05;
  std::optional<double> min_rho;
  validate->add_option("--tolerance", tolerance, "Allowed decrease of rho between consecutive levels");
  validate->add_option("--min-rho", min_rho, "Required rho at and above ceil(n/2) trainable layers");

  auto* measure = app.add_subcommand("measure", "Profile one training step at every layer level");
  add_common(measure);
  int warmup = 100;
  int reps = 100;
  measure->add_option("--warmup", warmup, "Untimed passes");
  measure->add_option("--reps", reps, "Timed passes");

  auto* report = app.add_subcommand("report", "Export landscapes, threshold maps and the SH comparison");
  add_common(report);
  bool no_svg = false;
  report->add_flag("--no-svg", no_svg, "Skip SVG heatmaps");

  auto* worker = app.add_subcommand("worker", "Serve the wire protocol on standard streams");
  worker->add_option("-c,--config", config_path, "Run configuration (JSON)")->required();
  int threads = 1;
  worker->add_option("--threads", threads, "Concurrent requests")->check(CLI::PositiveNumber);

  auto* split = app.add_subcommand("split-layers", "Flatten a module tree into parametric layers");
  std::string tree_path;
  std::vector<std::string> unwrap;
  std::optional<int> n_trainable;
  split->add_option("--tree", tree_path, "Module tree (JSON)")->required();
  split->add_option("--unwrap", unwrap, "Container types to unwrap")->delimiter(',');
  split->add_option("--n-trainable", n_trainable, "Also emit the freeze plan");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    io.out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    io.out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    io.err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (split->parsed()) {
      std::ifstream f(tree_path);
      if (!f) throw ConfigError("cannot open module tree " + tree_path);
      const json j = json::parse(f, nullptr, false);
      if (j.is_discarded()) throw ConfigError("module tree " + tree_path + " is not valid JSON");
      const auto tree = j.get<ModuleNode>();
      const auto layers = split_layers(tree, std::set<std::string>(unwrap.begin(), unwrap.end()));
      json out{{"layers", layers}};
      if (n_trainable) out["freeze_plan"] = make_freeze_plan(layers, *n_trainable);
      io.out << out.dump(2) << "\n";
      return kExitOk;
    }

    const auto lc = detail::load(config_path);
    const RunConfig& cfg = lc.cfg;

    if (worker->parsed()) {
      const auto backend = MicroBackend::from_config(cfg);
      const auto s = protocol::serve(
          io.in, io.out, [&](const EvalRequest& r, const std::optional<TrainBudget>& b) { return backend.evaluate_one(r, b); },
          {threads, micro_backend_axes()});
      return s.refused ? kExitConfig : kExitOk;
    }

    const auto dir = resolve_output_dir(cfg, out_dir);

    if (sweep->parsed()) {
      detail::bind_run_directory(dir, lc.raw);
      ResultStore store(dir / "sweep.jsonl");
      if (store.truncated_bytes() > 0) io.err << "sweep: discarded " << store.truncated_bytes() << " bytes of an interrupted append\n";
      const auto backend = MicroBackend::from_config(cfg, jobs);
      SweepOptions opts{jobs, max_units, [&](std::size_t done, std::size_t total) {
                          io.err << "\rsweep: " << done << "/" << total << std::flush;
                        }};
      const auto s = run_sweep(cfg, backend, store, opts);
      if (s.trained > 0) io.err << "\n";
      io.out << json{{"units", s.units}, {"trained", s.trained}, {"skipped", s.skipped},
                     {"records_written", s.records_written}, {"complete", s.complete}, {"store", store.path().string()}}
                    .dump()
             << "\n";
      return kExitOk;
    }

    if (sh->parsed()) {
      ShConfig shc = make_sh_config(cfg);
      if (mode) shc.mode = parse_sh_mode(*mode);
      if (eta) shc.eta = *eta;
      if (n_configs) shc.n_configs = *n_configs;
      const auto schedule = sh_schedule(shc);
      const auto all = cfg.search_space.enumerate();
      const auto configs = sample_configs(all, static_cast<std::size_t>(shc.n_configs), shc.seed);
      ShOptions opts{shc.mode, cfg.seeds.front(), std::nullopt};
      if (memory_parallel) opts.memory = build_memory_model(cfg);
      detail::bind_run_directory(dir, lc.raw);
      ResultStore store(dir / ("sh_" + to_string(shc.mode) + ".jsonl"));
      StoreObserver observer(store, store.size() == 0);
      std::unique_ptr<EvaluationBackend> backend;
      if (worker_cmd.empty())
        backend = std::make_unique<MicroBackend>(MicroBackend::from_config(cfg, jobs));
      else
        backend = std::make_unique<WorkerBackend>(detail::split_command(worker_cmd), cfg.budget);
      const ShTrace trace = run_sh(schedule, configs, *backend, &observer, opts);
      const json summary = to_summary_json(trace);
      detail::write_json(dir / ("sh_" + to_string(shc.mode) + ".json"), summary);
      io.out << summary.dump() << "\n";
      return kExitOk;
    }

    if (validate->parsed()) {
      const auto records = detail::ensure_sweep(lc, dir, jobs, io.err);
      const auto v = validate_fidelity(cfg, records, tolerance, min_rho);
      const json rep = to_json_report(v);
      detail::write_json(dir / "fidelity_report.json", rep);
      io.out << "cost monotonicity: " << (v.cost.all_pass() ? "pass" : "FAIL") << " ("
             << format_number(v.cost.pass_fraction * 100.0, "%.1f") << "% of groups)\n";
      io.out << "rank monotonicity: " << (v.rank.monotone ? "pass" : "FAIL") << " rho(z) =";
      for (double r : v.rank.rho) io.out << " " << format_number(r, "%.4f");
      io.out << "\n";
      if (min_rho)
        io.out << "rho >= " << *min_rho << " from z = " << v.threshold_layer << ": " << (v.rho_threshold_pass ? "pass" : "FAIL")
               << "\n";
      return v.pass() ? kExitOk : kExitValidation;
    }

    if (measure->parsed()) {
      const Task task = make_task(cfg.task);
      const Batch batch = head_batch(task.train, static_cast<std::size_t>(cfg.budget.batch_size));
      const Network net = Network::init(cfg.architecture, cfg.seeds.front());
      const HyperparamConfig hp = cfg.search_space.enumerate().front();
      json rows = json::array();
      bool exact = true;
      for (double zl : cfg.layers_axis().levels) {
        const int z = static_cast<int>(zl);
        const auto plan = make_freeze_plan(cfg.architecture, z);
        const auto est = estimate_cost(plan, cfg.architecture, cfg.budget.batch_size, hp.optimizer_kind());
        const auto m = measure_step(net, plan, batch, hp, task.objective(), warmup, reps);
        exact = exact && m.measured_flops == est.flops_per_step;
        rows.push_back({{"layers", z},
                        {"estimate", est},
                        {"measured", m},
                        {"transient_bytes", static_cast<std::int64_t>(m.peak_tracked_bytes) - static_cast<std::int64_t>(est.peak_bytes)}});
      }
      std::filesystem::create_directories(dir);
      const json out{{"batch_size", cfg.budget.batch_size}, {"levels", rows}, {"flops_exact", exact}};
      detail::write_json(dir / "measure.json", out);
      io.out << out.dump(2) << "\n";
      return exact ? kExitOk : kExitValidation;
    }

    if (report->parsed()) {
      const auto records = detail::ensure_sweep(lc, dir, jobs, io.err);
      const Comparison c = run_comparison(cfg, records);
      ReportOptions ro;
      ro.svg = !no_svg;
      const std::vector<ShTrace> traces{c.diagonal, c.single};
      const std::vector<RankLandscape> landscapes{c.landscape};
      const auto files = export_report(dir / "report", traces, landscapes, ro);
      io.out << "wrote " << files.comparison_csv.string() << ", " << files.summary_json.string() << "\n";
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    io.err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const UsageError& e) {
    io.err << "usage error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    io.err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace freezehpo::cli
