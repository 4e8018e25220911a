#include <catch_amalgamated.hpp>

#include <chrono>
#include <fstream>
#include <sstream>
#include <thread>

#include "freezehpo/core/rng.hpp"
#include "freezehpo/harness/micro_backend.hpp"
#include "freezehpo/harness/protocol.hpp"
#include "freezehpo/harness/run_config.hpp"
#include "freezehpo/harness/worker_client.hpp"
#include "freezehpo/scheduler/successive_halving.hpp"

using namespace freezehpo;
using Catch::Matchers::ContainsSubstring;

namespace {

const std::string kSmallConfig = std::string(FREEZEHPO_SOURCE_DIR) + "/configs/spiral_small.json";
const std::vector<std::string> kAxes{kLayersAxis, kDataAxis};
const std::string kHello = R"({"type":"hello","version":1})";

// Deterministic stand-in handler: objective encodes the request.
EvalRecord fake_eval(const EvalRequest& r, const std::optional<TrainBudget>& b) {
  EvalRecord out;
  out.config_id = r.config.id;
  out.fidelity = r.fidelity;
  out.seed = r.seed;
  out.objective = r.config.learning_rate + r.fidelity.at(kLayersAxis);
  out.diverged = false;
  out.cost = {static_cast<std::uint64_t>(100 * r.fidelity.at(kLayersAxis)), 64, 0.5};
  out.steps = b ? b->steps : 7;
  return out;
}

std::vector<json> serve_lines(const std::vector<std::string>& lines, protocol::ServeSummary* summary = nullptr,
                              const protocol::Handler& handler = fake_eval, int threads = 1) {
  std::string input;
  for (const auto& l : lines) input += l + "\n";
  std::istringstream in(input);
  std::ostringstream out;
  const auto s = protocol::serve(in, out, handler, {threads, kAxes});
  if (summary) *summary = s;
  std::vector<json> msgs;
  std::istringstream reader(out.str());
  std::string line;
  while (std::getline(reader, line)) msgs.push_back(json::parse(line));
  return msgs;
}

std::string eval_line(int msg_id, double layers = 2, double lr = 0.01) {
  return json{{"msg_id", msg_id},
              {"config", {{"id", msg_id}, {"learning_rate", lr}}},
              {"fidelity", {{kLayersAxis, layers}, {kDataAxis, 1.0}}},
              {"seed", 4}}
      .dump();
}

}  // namespace

TEST_CASE("handshake advertises version and axes", "[protocol]") {
  const auto msgs = serve_lines({kHello});
  REQUIRE(msgs.size() == 1);
  CHECK(msgs[0]["type"] == "hello");
  CHECK(msgs[0]["version"] == protocol::kVersion);
  CHECK(msgs[0]["axes"] == json(kAxes));
  CHECK(msgs[0]["capabilities"]["budget_override"] == true);
}

TEST_CASE("version mismatch is refused and ends the session", "[protocol]") {
  protocol::ServeSummary s;
  const auto msgs = serve_lines({R"({"type":"hello","version":2})", eval_line(1)}, &s);
  REQUIRE(msgs.size() == 1);
  CHECK(msgs[0]["type"] == "error");
  CHECK_THAT(msgs[0]["error"].get<std::string>(), ContainsSubstring("protocol version mismatch"));
  CHECK(s.refused);
  CHECK(s.requests == 0);
}

TEST_CASE("evaluations before the handshake are rejected", "[protocol]") {
  const auto msgs = serve_lines({eval_line(5)});
  REQUIRE(msgs.size() == 1);
  CHECK(msgs[0]["msg_id"] == 5);
  CHECK_THAT(msgs[0]["error"].get<std::string>(), ContainsSubstring("handshake required"));
  CHECK(msgs[0]["diverged"] == true);
  CHECK(msgs[0]["objective"].is_null());
}

TEST_CASE("evaluation round trip", "[protocol]") {
  protocol::ServeSummary s;
  json with_budget = json::parse(eval_line(2));
  with_budget["budget"] = {{"steps", 11}, {"batch_size", 8}};
  const auto msgs = serve_lines({kHello, eval_line(1), with_budget.dump()}, &s);
  REQUIRE(msgs.size() == 3);
  CHECK(msgs[1]["msg_id"] == 1);
  CHECK(msgs[1]["objective"] == 2.01);
  CHECK(msgs[1]["diverged"] == false);
  CHECK(msgs[1]["cost"]["flops"] == 200);
  CHECK(msgs[1]["steps"] == 7);
  CHECK(msgs[2]["steps"] == 11);
  CHECK(s.requests == 2);
  CHECK(s.errors == 0);
}

TEST_CASE("defective requests get named errors", "[protocol]") {
  json unsupported = json::parse(eval_line(3));
  unsupported["fidelity"]["epochs"] = 2;
  json no_config = json::parse(eval_line(4));
  no_config.erase("config");
  json bad_value = json::parse(eval_line(5));
  bad_value["fidelity"][kLayersAxis] = "two";
  json bad_budget = json::parse(eval_line(6));
  bad_budget["budget"] = {{"steps", 0}};
  json bad_config = json::parse(eval_line(7));
  bad_config["config"]["optimizer"] = 3;
  protocol::ServeSummary s;
  const auto msgs = serve_lines({kHello, "{not json", unsupported.dump(), no_config.dump(), R"({"config":{}})", bad_value.dump(),
                                 bad_budget.dump(), bad_config.dump(), R"({"type":"ping","msg_id":9})", "[1,2]"},
                                &s);
  REQUIRE(msgs.size() == 10);
  auto err = [&](std::size_t k) { return msgs[k]["error"].get<std::string>(); };
  CHECK_THAT(err(1), ContainsSubstring("not valid JSON"));
  CHECK(msgs[1]["msg_id"].is_null());
  CHECK(err(2) == "unsupported axis 'epochs'");
  CHECK(msgs[2]["msg_id"] == 3);
  CHECK_THAT(err(3), ContainsSubstring("missing config"));
  CHECK_THAT(err(4), ContainsSubstring("msg_id"));
  CHECK_THAT(err(5), ContainsSubstring("finite number"));
  CHECK_THAT(err(6), ContainsSubstring("malformed request"));
  CHECK_THAT(err(7), ContainsSubstring("malformed request"));
  CHECK_THAT(err(8), ContainsSubstring("unknown message type 'ping'"));
  CHECK_THAT(err(9), ContainsSubstring("malformed request"));
  for (std::size_t k = 1; k < msgs.size(); ++k) CHECK(msgs[k]["diverged"] == true);
  CHECK(s.errors == 9);
}

TEST_CASE("handler failures become error responses", "[protocol]") {
  const auto msgs = serve_lines({kHello, eval_line(1)}, nullptr,
                                [](const EvalRequest&, const std::optional<TrainBudget>&) -> EvalRecord { throw Error("boom"); });
  REQUIRE(msgs.size() == 2);
  CHECK(msgs[1]["msg_id"] == 1);
  CHECK(msgs[1]["error"] == "boom");
}

TEST_CASE("shutdown stops reading but drains in-flight work", "[protocol]") {
  const auto msgs = serve_lines({kHello, eval_line(1), R"({"type":"shutdown"})", eval_line(2)});
  REQUIRE(msgs.size() == 2);
  CHECK(msgs[1]["msg_id"] == 1);
}

TEST_CASE("concurrent responses correlate by msg_id", "[protocol]") {
  auto slow_first = [](const EvalRequest& r, const std::optional<TrainBudget>& b) {
    if (r.config.id == 1) std::this_thread::sleep_for(std::chrono::milliseconds(200));
    return fake_eval(r, b);
  };
  const auto msgs = serve_lines({kHello, eval_line(1, 1, 0.5), eval_line(2, 3, 0.25)}, nullptr, slow_first, 2);
  REQUIRE(msgs.size() == 3);
  CHECK(msgs[1]["msg_id"] == 2);
  CHECK(msgs[2]["msg_id"] == 1);
  CHECK(msgs[1]["objective"] == 3.25);
  CHECK(msgs[2]["objective"] == 1.5);

  EvalRequest req{{}, FidelityPoint{{{kLayersAxis, 1.0}}}, 0};
  req.config.id = 1;
  const auto rec = protocol::decode_response(msgs[2], req);
  CHECK(rec.objective == 1.5);
  CHECK(rec.cost.flops == 100);
  CHECK(rec.config_id == 1);
}

TEST_CASE("response decoding", "[protocol]") {
  EvalRequest req{{}, FidelityPoint{{{kLayersAxis, 2.0}}}, 3};
  const auto err = protocol::decode_response(protocol::error_response(1, "nope"), req);
  CHECK(err.diverged);
  CHECK(err.error == "nope");
  const auto nul = protocol::decode_response(json{{"msg_id", 1}, {"objective", nullptr}, {"diverged", true}, {"cost", CostRecord{}}}, req);
  CHECK(nul.diverged);
  CHECK(nul.error.empty());
  const auto broken = protocol::decode_response(json{{"msg_id", 1}, {"objective", 0.5}}, req);
  CHECK_THAT(broken.error, ContainsSubstring("malformed worker response"));
  const auto msg = protocol::request_message(9, req, TrainBudget{5, 4, 1.0});
  CHECK(msg["budget"]["steps"] == 5);
  CHECK(protocol::parse_request(msg, kAxes).budget->batch_size == 4);
  CHECK(protocol::parse_request(msg, kAxes).eval.seed == 3);
}

TEST_CASE("random input never crashes the worker loop", "[protocol][property]") {
  Rng rng(99);
  const std::string alphabet = "{}[]\":,0123456789.-+eEtrufalsn \\abcxyz\t\x01\x7f\xc3\xa9\xff";
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::string> lines{kHello};
    std::size_t expected = 1;
    for (int k = 0; k < 40; ++k) {
      std::string l;
      const std::size_t len = rng.below(60);
      for (std::size_t c = 0; c < len; ++c) l += alphabet[rng.below(alphabet.size())];
      if (rng.below(4) == 0) {
        // Mutated valid request.
        l = eval_line(k);
        l[rng.below(l.size())] = alphabet[rng.below(alphabet.size())];
      }
      lines.push_back(l);
      std::string trimmed = l;
      if (!trimmed.empty() && trimmed.back() == '\r') trimmed.pop_back();
      if (trimmed.find_first_not_of(" \t") != std::string::npos) ++expected;
    }
    std::vector<json> msgs;
    REQUIRE_NOTHROW(msgs = serve_lines(lines));
    CHECK(msgs.size() == expected);
  }
}

TEST_CASE("worker subprocess matches the in-process backend", "[protocol][worker]") {
  const auto cfg = load_run_config(kSmallConfig);
  MicroBackend local = MicroBackend::from_config(cfg);
  WorkerBackend remote({FREEZEHPO_CLI, "worker", "-c", kSmallConfig, "--threads", "2"});
  CHECK(remote.axes() == kAxes);
  const auto configs = cfg.search_space.enumerate();
  std::vector<EvalRequest> reqs;
  for (const auto& c : configs) reqs.push_back({c, FidelityPoint{{{kLayersAxis, 2.0}, {kDataAxis, 0.5}}}, 1});
  FidelityPoint bad{{{kLayersAxis, 2.0}, {"epochs", 1.0}}};
  reqs.push_back({configs[0], bad, 0});
  const auto want = local.evaluate(std::span(reqs).first(configs.size()));
  const auto got = remote.evaluate(reqs);
  REQUIRE(got.size() == reqs.size());
  for (std::size_t k = 0; k < configs.size(); ++k) {
    CHECK(got[k].config_id == want[k].config_id);
    CHECK(got[k].objective == want[k].objective);
    CHECK(got[k].cost.flops == want[k].cost.flops);
    CHECK(got[k].steps == want[k].steps);
  }
  CHECK(got.back().error == "unsupported axis 'epochs'");

  // A full SH run through the worker picks the in-process winner.
  const auto shc = make_sh_config(cfg);
  const auto schedule = sh_schedule(shc);
  ShOptions opts{shc.mode, 0, std::nullopt};
  const auto a = run_sh(schedule, configs, local, nullptr, opts);
  const auto b = run_sh(schedule, configs, remote, nullptr, opts);
  CHECK(a.winner_id == b.winner_id);
  CHECK(a.rungs.back().cumulative_flops == b.rungs.back().cumulative_flops);
}

TEST_CASE("worker subprocess refuses a foreign protocol version", "[protocol][worker]") {
  Subprocess p({FREEZEHPO_CLI, "worker", "-c", kSmallConfig});
  p.write_line(R"({"type":"hello","version":7})" "\n");
  const auto line = p.read_line();
  REQUIRE(line);
  const auto j = json::parse(*line);
  CHECK(j["type"] == "error");
  CHECK_THAT(j["error"].get<std::string>(), ContainsSubstring("client requested 7"));
  p.close_stdin();
  CHECK(p.wait() == 2);
  CHECK_THROWS_AS(WorkerBackend({"/bin/false"}), ProtocolError);
}
