#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "freezehpo/core/error.hpp"
#include "freezehpo/core/types.hpp"
#include "freezehpo/scheduler/backend.hpp"
#include "freezehpo/scheduler/successive_halving.hpp"

namespace freezehpo {

enum class RecordKind { eval, rung, wave, report };

inline std::string to_string(RecordKind k) {
  switch (k) {
    case RecordKind::eval: return "eval";
    case RecordKind::rung: return "rung";
    case RecordKind::wave: return "wave";
    case RecordKind::report: return "report";
  }
  return "eval";
}

inline RecordKind parse_record_kind(const std::string& s) {
  if (s == "eval") return RecordKind::eval;
  if (s == "rung") return RecordKind::rung;
  if (s == "wave") return RecordKind::wave;
  if (s == "report") return RecordKind::report;
  throw IoError("unknown store record kind '" + s + "'");
}

struct StoreRecord {
  std::uint64_t id = 0;
  std::string ts;
  RecordKind kind = RecordKind::eval;
  json payload;
};

inline void to_json(json& j, const StoreRecord& r) {
  j = json{{"id", r.id}, {"kind", to_string(r.kind)}, {"payload", r.payload}, {"ts", r.ts}};
}

inline void from_json(const json& j, StoreRecord& r) {
  r.id = j.at("id").get<std::uint64_t>();
  r.kind = parse_record_kind(j.at("kind").get<std::string>());
  r.payload = j.at("payload");
  r.ts = j.value("ts", "");
}

// UTC, millisecond resolution, ISO 8601.
inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[40];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

using EvalKey = std::tuple<int, std::string, std::uint64_t>;

inline EvalKey eval_key(int config_id, const FidelityPoint& f, std::uint64_t seed) { return {config_id, f.key(), seed}; }

// Append-only JSON-lines store. Ids increase by one per record. A trailing
// line without its newline (an interrupted append) is cut off on open.
// Appends are serialized and flushed before returning.
class ResultStore {
 public:
  explicit ResultStore(std::filesystem::path path) : path_(std::move(path)) {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    load();
    out_.open(path_, std::ios::binary | std::ios::app);
    if (!out_) throw IoError("cannot open store " + path_.string() + " for appending");
  }

  ResultStore(const ResultStore&) = delete;
  ResultStore& operator=(const ResultStore&) = delete;

  const std::filesystem::path& path() const { return path_; }

  std::uint64_t append(RecordKind kind, json payload) {
    std::lock_guard lock(mu_);
    StoreRecord r{next_id_++, utc_timestamp(), kind, std::move(payload)};
    const std::string line = json(r).dump(-1, ' ', false, json::error_handler_t::replace) + "\n";
    out_.write(line.data(), static_cast<std::streamsize>(line.size()));
    out_.flush();
    if (!out_) throw IoError("append to " + path_.string() + " failed");
    index(r);
    records_.push_back(std::move(r));
    return records_.back().id;
  }

  std::uint64_t append_eval(const EvalRecord& e) { return append(RecordKind::eval, json(e)); }

  std::optional<EvalRecord> find_eval(int config_id, const FidelityPoint& f, std::uint64_t seed) const {
    std::lock_guard lock(mu_);
    auto it = evals_.find(eval_key(config_id, f, seed));
    if (it == evals_.end()) return std::nullopt;
    return it->second;
  }

  bool has_eval(int config_id, const FidelityPoint& f, std::uint64_t seed) const {
    return find_eval(config_id, f, seed).has_value();
  }

  std::vector<EvalRecord> evals() const {
    std::lock_guard lock(mu_);
    std::vector<EvalRecord> out;
    for (const auto& r : records_)
      if (r.kind == RecordKind::eval) out.push_back(r.payload.get<EvalRecord>());
    return out;
  }

  std::vector<StoreRecord> records() const {
    std::lock_guard lock(mu_);
    return records_;
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return records_.size();
  }

  // Bytes cut from the tail on open.
  std::uintmax_t truncated_bytes() const { return truncated_; }

 private:
  void index(const StoreRecord& r) {
    if (r.kind != RecordKind::eval) return;
    EvalRecord e = r.payload.get<EvalRecord>();
    evals_.emplace(eval_key(e.config_id, e.fidelity, e.seed), std::move(e));
  }

  void load() {
    if (!std::filesystem::exists(path_)) return;
    std::ifstream in(path_, std::ios::binary);
    if (!in) throw IoError("cannot read store " + path_.string());
    const std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    std::size_t pos = 0;
    std::size_t good = 0;
    std::size_t lineno = 0;
    while (pos < content.size()) {
      const std::size_t nl = content.find('\n', pos);
      if (nl == std::string::npos) break;
      ++lineno;
      const std::string line = content.substr(pos, nl - pos);
      pos = nl + 1;
      if (line.empty()) {
        good = pos;
        continue;
      }
      StoreRecord r;
      try {
        r = json::parse(line).get<StoreRecord>();
      } catch (const std::exception& e) {
        throw IoError(path_.string() + ":" + std::to_string(lineno) + ": corrupt store record: " + e.what());
      }
      if (r.id != next_id_)
        throw IoError(path_.string() + ":" + std::to_string(lineno) + ": record id " + std::to_string(r.id) +
                      " breaks the sequence (expected " + std::to_string(next_id_) + ")");
      ++next_id_;
      index(r);
      records_.push_back(std::move(r));
      good = pos;
    }
    if (good < content.size()) {
      truncated_ = content.size() - good;
      std::filesystem::resize_file(path_, good);
    }
  }

  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::ofstream out_;
  std::vector<StoreRecord> records_;
  std::map<EvalKey, EvalRecord> evals_;
  std::uint64_t next_id_ = 0;
  std::uintmax_t truncated_ = 0;
};

// Persists every evaluation, wave and rung of an SH run and serves stored
// evaluations back so that a resumed run skips them.
class StoreObserver : public ShObserver {
 public:
  explicit StoreObserver(ResultStore& store, bool record_structure = true)
      : store_(store), record_structure_(record_structure) {}

  std::optional<EvalRecord> lookup(int config_id, const FidelityPoint& f, std::uint64_t seed) override {
    return store_.find_eval(config_id, f, seed);
  }
  void on_eval(const EvalRecord& r) override { store_.append_eval(r); }
  void on_wave(const ExecutionWave& w) override {
    if (record_structure_) store_.append(RecordKind::wave, json(w));
  }
  void on_rung(const Rung& r) override {
    if (record_structure_) store_.append(RecordKind::rung, json(r));
  }

 private:
  ResultStore& store_;
  bool record_structure_;
};

// Serves evaluations from a store only; used to replay a finished run.
class StoreBackend : public EvaluationBackend {
 public:
  explicit StoreBackend(const ResultStore& store) : store_(store) {}

  std::vector<EvalRecord> evaluate(std::span<const EvalRequest> requests) override {
    std::vector<EvalRecord> out;
    for (const auto& req : requests) {
      auto r = store_.find_eval(req.config.id, req.fidelity, req.seed);
      out.push_back(r ? *r : failed_record(req, "evaluation missing from store: config " + std::to_string(req.config.id) +
                                                  " at " + req.fidelity.key()));
    }
    return out;
  }

 private:
  const ResultStore& store_;
};

// Rung records of a store in order of appearance.
inline std::vector<json> stored_rungs(const ResultStore& store) {
  std::vector<json> out;
  for (const auto& r : store.records())
    if (r.kind == RecordKind::rung) out.push_back(r.payload);
  return out;
}

// Rebuilds an SH trace purely from stored evaluations.
inline ShTrace replay_sh(const ResultStore& store, std::span<const RungSkeleton> schedule,
                         std::span<const HyperparamConfig> configs, const ShOptions& options) {
  StoreBackend backend(store);
  return run_sh(schedule, configs, backend, nullptr, options);
}

// Canonical store content with volatile fields removed: the timestamp of
// every record and measured wall time inside payloads.
inline std::string canonical_store_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read store " + path.string());
  std::string out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    j.erase("ts");
    auto& p = j["payload"];
    if (p.is_object()) {
      if (p.contains("cost") && p["cost"].is_object()) p["cost"].erase("wall_ms");
      p.erase("cumulative_wall_ms");
    }
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace freezehpo
