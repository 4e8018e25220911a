#pragma once

#include <cmath>
#include <functional>
#include <istream>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "freezehpo/core/error.hpp"
#include "freezehpo/core/parallel.hpp"
#include "freezehpo/core/types.hpp"
#include "freezehpo/microtrainer/trainer.hpp"
#include "freezehpo/scheduler/backend.hpp"

namespace freezehpo::protocol {

// Newline-delimited JSON, one message per line.
//   client -> worker  {"type":"hello","version":1}
//   worker -> client  {"type":"hello","version":1,"axes":[...],"capabilities":{...}}
//   client -> worker  {"msg_id":..,"config":{..},"fidelity":{..},"seed":..,"budget":{..}}
//   worker -> client  {"msg_id":..,"objective":..,"diverged":..,"cost":{..}}
//                     or {"msg_id":..,"error":"..","diverged":true,"objective":null}
//   client -> worker  {"type":"shutdown"}
// Responses may arrive in any order.

inline constexpr int kVersion = 1;

struct Request {
  json msg_id;
  EvalRequest eval;
  std::optional<TrainBudget> budget;
};

inline json hello_message(const std::vector<std::string>& axes) {
  return json{{"type", "hello"},
              {"version", kVersion},
              {"axes", axes},
              {"capabilities", {{"budget_override", true}, {"concurrent", true}}}};
}

inline json error_response(const json& msg_id, const std::string& message) {
  return json{{"msg_id", msg_id}, {"error", message}, {"diverged", true}, {"objective", nullptr}};
}

inline json eval_response(const json& msg_id, const EvalRecord& r) {
  if (!r.error.empty()) return error_response(msg_id, r.error);
  json j{{"msg_id", msg_id},
         {"objective", r.diverged ? json(nullptr) : json(r.objective)},
         {"diverged", r.diverged},
         {"cost", r.cost},
         {"steps", r.steps}};
  return j;
}

inline std::string encode(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::replace) + "\n"; }

// Throws ProtocolError naming the defect.
inline Request parse_request(const json& j, const std::vector<std::string>& axes) {
  if (!j.is_object()) throw ProtocolError("malformed request: message must be a JSON object");
  Request r;
  if (!j.contains("msg_id") || !(j["msg_id"].is_number_integer() || j["msg_id"].is_string()))
    throw ProtocolError("malformed request: msg_id must be an integer or string");
  r.msg_id = j["msg_id"];
  try {
    if (!j.contains("config") || !j["config"].is_object()) throw ProtocolError("malformed request: missing config object");
    if (!j.contains("fidelity") || !j["fidelity"].is_object()) throw ProtocolError("malformed request: missing fidelity object");
    r.eval.config = j["config"].get<HyperparamConfig>();
    for (const auto& [name, v] : j["fidelity"].items()) {
      bool declared = false;
      for (const auto& a : axes) declared = declared || a == name;
      if (!declared) throw ProtocolError("unsupported axis '" + name + "'");
      if (!v.is_number() || !std::isfinite(v.get<double>()))
        throw ProtocolError("malformed request: fidelity value for '" + name + "' must be a finite number");
      r.eval.fidelity.values[name] = v.get<double>();
    }
    r.eval.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("budget")) {
      const json& b = j["budget"];
      if (!b.is_object()) throw ProtocolError("malformed request: budget must be an object");
      TrainBudget tb;
      tb.steps = b.value("steps", tb.steps);
      tb.batch_size = b.value("batch_size", tb.batch_size);
      validate_budget(tb);
      r.budget = tb;
    }
  } catch (const ProtocolError&) {
    throw;
  } catch (const std::exception& e) {
    throw ProtocolError(std::string("malformed request: ") + e.what());
  }
  return r;
}

using Handler = std::function<EvalRecord(const EvalRequest&, const std::optional<TrainBudget>&)>;

struct ServeOptions {
  int threads = 1;
  std::vector<std::string> axes;
};

struct ServeSummary {
  std::size_t requests = 0;
  std::size_t errors = 0;
  bool refused = false;  // handshake version mismatch
};

// Serves until EOF or a shutdown message; in-flight work is drained before
// returning. Never throws on bad input: every defective line is answered
// with an error response.
inline ServeSummary serve(std::istream& in, std::ostream& out, const Handler& handler, const ServeOptions& options) {
  ServeSummary summary;
  std::mutex out_mu;
  auto send = [&](const json& j) {
    std::lock_guard lock(out_mu);
    out << encode(j);
    out.flush();
  };
  bool greeted = false;
  {
    ThreadPool pool(std::max(1, options.threads));
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.find_first_not_of(" \t") == std::string::npos) continue;
      json j = json::parse(line, nullptr, false);
      if (j.is_discarded()) {
        ++summary.errors;
        send(error_response(nullptr, "malformed request: not valid JSON"));
        continue;
      }
      const std::string type = j.is_object() && j.contains("type") && j["type"].is_string() ? j["type"].get<std::string>() : "eval";
      if (type == "shutdown") break;
      if (type == "hello") {
        const json v = j.is_object() ? j.value("version", json(nullptr)) : json(nullptr);
        if (!v.is_number_integer() || v.get<long long>() != kVersion) {
          summary.refused = true;
          send(json{{"type", "error"},
                    {"error", "protocol version mismatch: worker speaks version " + std::to_string(kVersion) +
                                  ", client requested " + v.dump()}});
          break;
        }
        greeted = true;
        send(hello_message(options.axes));
        continue;
      }
      const json msg_id = j.is_object() && j.contains("msg_id") ? j["msg_id"] : json(nullptr);
      if (type != "eval") {
        ++summary.errors;
        send(error_response(msg_id, "malformed request: unknown message type '" + type + "'"));
        continue;
      }
      if (!greeted) {
        ++summary.errors;
        send(error_response(msg_id, "handshake required: send {\"type\":\"hello\",\"version\":" + std::to_string(kVersion) + "} first"));
        continue;
      }
      Request req;
      try {
        req = parse_request(j, options.axes);
      } catch (const std::exception& e) {
        ++summary.errors;
        send(error_response(msg_id, e.what()));
        continue;
      }
      ++summary.requests;
      pool.submit([&send, &handler, req = std::move(req)] {
        json resp;
        try {
          resp = eval_response(req.msg_id, handler(req.eval, req.budget));
        } catch (const std::exception& e) {
          resp = error_response(req.msg_id, e.what());
        }
        send(resp);
      });
    }
  }
  return summary;
}

// Client-side decoding of a worker response into a record for `req`.
inline EvalRecord decode_response(const json& j, const EvalRequest& req) {
  if (j.contains("error") && j["error"].is_string()) return failed_record(req, j["error"].get<std::string>());
  EvalRecord r;
  r.config_id = req.config.id;
  r.fidelity = req.fidelity;
  r.seed = req.seed;
  try {
    r.diverged = j.at("diverged").get<bool>();
    r.objective = j.at("objective").is_null() ? kDivergedObjective : j.at("objective").get<double>();
    if (!std::isfinite(r.objective)) r.diverged = true;
    if (r.diverged) r.objective = kDivergedObjective;
    r.cost = j.at("cost").get<CostRecord>();
    r.steps = j.value("steps", 0);
  } catch (const std::exception& e) {
    return failed_record(req, std::string("malformed worker response: ") + e.what());
  }
  return r;
}

inline json request_message(const json& msg_id, const EvalRequest& req, const std::optional<TrainBudget>& budget = std::nullopt) {
  json fid = json::object();
  for (const auto& [k, v] : req.fidelity.values) fid[k] = v;
  json j{{"msg_id", msg_id}, {"config", req.config}, {"fidelity", std::move(fid)}, {"seed", req.seed}};
  if (budget) j["budget"] = {{"steps", budget->steps}, {"batch_size", budget->batch_size}};
  return j;
}

}  // namespace freezehpo::protocol
