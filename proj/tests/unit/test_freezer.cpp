#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "freezehpo/core/rng.hpp"
#include "freezehpo/freezer/consolidate.hpp"
#include "freezehpo/freezer/cost_model.hpp"
#include "freezehpo/freezer/freeze_plan.hpp"
#include "freezehpo/freezer/measure.hpp"
#include "freezehpo/freezer/module_tree.hpp"
#include "freezehpo/microtrainer/layer_spec.hpp"
#include "freezehpo/microtrainer/task.hpp"

using namespace freezehpo;
using Catch::Matchers::ContainsSubstring;

namespace {

std::vector<std::string> names(const std::vector<Layer>& layers) {
  std::vector<std::string> out;
  for (const auto& l : layers) out.push_back(l.path);
  return out;
}

Architecture net_8_8_2() {
  return make_mlp(8, {{8, Activation::relu}, {8, Activation::relu}, {2, Activation::identity}});
}

// Cost counted layer by layer from the definition of each term.
struct HandCount {
  std::uint64_t flops = 0;
  std::uint64_t bytes = 0;
};

HandCount hand_count(const Architecture& arch, int z, int B, int state_per_param) {
  HandCount c;
  const int n = parametric_layer_count(arch);
  int p = 0;
  bool first_trainable = true;
  std::uint64_t trainable = 0, total = 0, acts = static_cast<std::uint64_t>(B) * arch.back().d_out;
  bool in_trainable_region = false;
  for (const auto& l : arch) {
    const std::uint64_t mac2 = 2ull * B * l.d_in * l.d_out;
    if (l.has_params) {
      const bool trainable_layer = p >= n - z;
      if (trainable_layer) in_trainable_region = true;
      c.flops += mac2;
      if (trainable_layer) {
        c.flops += mac2;
        if (!first_trainable) c.flops += mac2;
        first_trainable = false;
        trainable += l.param_count();
      }
      total += l.param_count();
      ++p;
    }
    if (in_trainable_region) acts += static_cast<std::uint64_t>(B) * l.d_in;
  }
  c.bytes = 4 * (total + trainable + state_per_param * trainable + acts);
  return c;
}

Architecture random_arch(Rng& rng) {
  const int depth = 2 + static_cast<int>(rng.below(5));
  std::vector<std::pair<int, Activation>> widths;
  for (int i = 0; i < depth; ++i)
    widths.push_back({1 + static_cast<int>(rng.below(24)), i + 1 == depth ? Activation::identity : Activation::tanh});
  return make_mlp(1 + static_cast<int>(rng.below(8)), widths);
}

json load_fixture(const std::string& name) {
  std::ifstream f(std::string(FREEZEHPO_SOURCE_DIR) + "/tests/fixtures/module_trees/" + name);
  REQUIRE(f.good());
  return json::parse(f);
}

}  // namespace

TEST_CASE("flat sequential flattens in order", "[split]") {
  const auto tree = sequential("", {leaf("a", "Dense", 10), leaf("b", "Dense", 4)});
  CHECK(names(split_layers(tree)) == std::vector<std::string>{"a", "b"});
}

TEST_CASE("unwrap set controls block granularity", "[split]") {
  const auto tree = sequential("", {container("blk", "Block", {leaf("c", "Dense", 6), leaf("d", "Dense", 6)}), leaf("e", "Dense", 3)});
  CHECK(names(split_layers(tree, {"Block"})) == std::vector<std::string>{"blk.c", "blk.d", "e"});
  const auto coarse = split_layers(tree);
  CHECK(names(coarse) == std::vector<std::string>{"blk", "e"});
  CHECK(coarse[0].param_count == 12);
}

TEST_CASE("activation-only tree has no parametric layers", "[split]") {
  const auto tree = sequential("", {leaf("r", "ReLU", 0, true), leaf("t", "Tanh", 0, true)});
  CHECK_THROWS_WITH(split_layers(tree), ContainsSubstring("no parametric layers"));
}

TEST_CASE("nested tree flattens like its hand-flattened form", "[split]") {
  const auto nested = sequential("", {sequential("s", {leaf("a", "Dense", 5), sequential("t", {leaf("b", "Dense", 7)})}),
                                      container("u", "Block", {leaf("c", "Dense", 2), leaf("act", "ReLU", 0, true)}),
                                      leaf("d", "Dense", 1)});
  const auto flat = sequential("", {leaf("a", "Dense", 5), leaf("b", "Dense", 7), leaf("c", "Dense", 2), leaf("d", "Dense", 1)});
  const auto x = split_layers(nested, {"Block"});
  const auto y = split_layers(flat);
  REQUIRE(x.size() == y.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(x[i].name == y[i].name);
    CHECK(x[i].param_count == y[i].param_count);
  }
}

TEST_CASE("shared module-tree fixtures flatten to their expected layers", "[split][fixtures]") {
  const std::vector<std::string> fixtures{"flat_mlp.json", "nested_blocks.json", "blocks_not_unwrapped.json",
                                          "deep_sequential.json", "transformer_like.json"};
  for (const auto& name : fixtures) {
    const json fx = load_fixture(name);
    const auto tree = fx.at("tree").get<ModuleNode>();
    const auto unwrap = fx.at("unwrap").get<std::set<std::string>>();
    INFO(name);
    CHECK(names(split_layers(tree, unwrap)) == fx.at("expected").get<std::vector<std::string>>());
    // serialization round trip preserves the flattening
    const ModuleNode again = json(tree).get<ModuleNode>();
    CHECK(names(split_layers(again, unwrap)) == names(split_layers(tree, unwrap)));
  }
}

TEST_CASE("module tree JSON rejects unknown keys and kinds", "[split]") {
  CHECK_THROWS_AS(json::parse(R"({"name":"x","kind":"leaf","params":1,"shape":[2]})").get<ModuleNode>(), ConfigError);
  CHECK_THROWS_AS(json::parse(R"({"name":"x","kind":"branch"})").get<ModuleNode>(), ConfigError);
}

TEST_CASE("freeze plan at the extremes of z", "[plan]") {
  std::vector<Layer> layers;
  for (int i = 0; i < 10; ++i) layers.push_back({"l" + std::to_string(i), "", "Dense", static_cast<std::uint64_t>(10 + i), false});
  const auto full = make_freeze_plan(layers, 10);
  CHECK(full.frozen_params() == 0);
  CHECK(full.frozen_count() == 0);
  const auto low = make_freeze_plan(layers, 1);
  CHECK(low.frozen_count() == 9);
  CHECK(low.trainable_params() == 19);
}

TEST_CASE("freeze plan parameter split of the 162-parameter net", "[plan]") {
  const auto plan = make_freeze_plan(net_8_8_2(), 2);
  // Trainable: 8*8+8 + 8*2+2; frozen: the first 8*8+8 block.
  CHECK(plan.trainable_params() == 90);
  CHECK(plan.frozen_params() == 72);
  CHECK(plan.trainable_params() + plan.frozen_params() == 162);
}

TEST_CASE("out-of-range z names the valid interval", "[plan]") {
  CHECK_THROWS_WITH(make_freeze_plan(net_8_8_2(), 0), ContainsSubstring("valid interval is [1, 3]"));
  CHECK_THROWS_WITH(make_freeze_plan(net_8_8_2(), 4), ContainsSubstring("valid interval is [1, 3]"));
}

TEST_CASE("frozen layers are always a prefix", "[plan][property]") {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const auto arch = random_arch(rng);
    const int n = parametric_layer_count(arch);
    const int z = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
    const auto plan = make_freeze_plan(arch, z);
    bool seen_trainable = false;
    for (const auto& e : plan.entries()) {
      if (!e.frozen) seen_trainable = true;
      CHECK_FALSE((seen_trainable && e.frozen));
    }
    CHECK(plan.z() == z);
    CHECK(plan.total_params() == parameter_count(arch));
  }
}

TEST_CASE("per-activation consolidation ends every group at an activation", "[consolidate]") {
  const std::vector<Layer> layers{{"d1", "d1", "Dense", 4, false}, {"r1", "r1", "ReLU", 0, true},
                                  {"d2", "d2", "Dense", 4, false}, {"r2", "r2", "ReLU", 0, true}};
  ConsolidationRules rules;
  const auto g = consolidate(layers, rules);
  REQUIRE(g.size() == 2);
  CHECK(g[0].ends_with_activation);
  CHECK(g[1].ends_with_activation);
  CHECK(g[0].param_count == 4);
}

TEST_CASE("fixed-size consolidation", "[consolidate]") {
  std::vector<Layer> layers;
  for (int i = 0; i < 8; ++i) layers.push_back({"l" + std::to_string(i), "l" + std::to_string(i), "Dense", 1, false});
  ConsolidationRules rules;
  rules.mode = ConsolidationRules::Mode::fixed_block_size;
  rules.block_size = 1;
  CHECK(names(consolidate(layers, rules)) == names(layers));
  rules.block_size = 3;
  const auto g = consolidate(layers, rules);
  REQUIRE(g.size() == 3);
  CHECK(g[0].param_count == 3);
  CHECK(g[1].param_count == 3);
  CHECK(g[2].param_count == 2);
}

TEST_CASE("named groups", "[consolidate]") {
  const std::vector<Layer> layers{{"a", "blk.a", "Dense", 2, false}, {"b", "blk.b", "Dense", 3, false}, {"c", "c", "Dense", 5, false}};
  ConsolidationRules rules;
  rules.mode = ConsolidationRules::Mode::named_groups;
  rules.groups = {{"block", {"blk.a", "blk.b"}}, {"head", {"c"}}};
  const auto g = consolidate(layers, rules);
  REQUIRE(g.size() == 2);
  CHECK(g[0].param_count == 5);
  SECTION("splitting a parametric leaf is rejected") {
    rules.groups = {{"bad", {"blk.a.weight"}}, {"rest", {"blk.b", "c"}}};
    CHECK_THROWS_WITH(consolidate(layers, rules), ContainsSubstring("splits parametric leaf"));
  }
  SECTION("non-contiguous groups are rejected") {
    rules.groups = {{"x", {"blk.a", "c"}}, {"y", {"blk.b"}}};
    CHECK_THROWS_AS(consolidate(layers, rules), ConfigError);
  }
  SECTION("groups must cover every layer") {
    rules.groups = {{"x", {"blk.a", "blk.b"}}};
    CHECK_THROWS_AS(consolidate(layers, rules), ConfigError);
  }
}

TEST_CASE("consolidation preserves order and parameters", "[consolidate][property]") {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Layer> layers;
    const int n = 1 + static_cast<int>(rng.below(12));
    std::uint64_t total = 0;
    for (int i = 0; i < n; ++i) {
      const bool act = rng.uniform() < 0.4;
      const std::uint64_t p = act ? 0 : 1 + rng.below(50);
      layers.push_back({"l" + std::to_string(i), "l" + std::to_string(i), act ? "ReLU" : "Dense", p, act});
      total += p;
    }
    ConsolidationRules rules;
    if (trial % 2) {
      rules.mode = ConsolidationRules::Mode::fixed_block_size;
      rules.block_size = 1 + rng.below(4);
    }
    std::uint64_t sum = 0;
    for (const auto& g : consolidate(layers, rules)) sum += g.param_count;
    CHECK(sum == total);
  }
}

TEST_CASE("cost of z = 1 on the 8-8-2 net at batch 4", "[cost]") {
  const auto c = estimate_cost(make_freeze_plan(net_8_8_2(), 1), net_8_8_2(), 4, OptimizerKind::adam);
  CHECK(c.forward_flops == 1152);
  CHECK(c.wgrad_flops == 128);
  CHECK(c.dgrad_flops == 0);
  CHECK(c.flops_per_step == 1280);
}

TEST_CASE("cost at z = n is three forwards minus the boundary dgrad", "[cost]") {
  const auto arch = net_8_8_2();
  const auto c = estimate_cost(make_freeze_plan(arch, 3), arch, 4, OptimizerKind::sgd);
  CHECK(c.flops_per_step == 3 * c.forward_flops - 2ull * 4 * 8 * 8);
}

TEST_CASE("estimate agrees with a layer-by-layer hand count", "[cost][property]") {
  Rng rng(2);
  const OptimizerKind kinds[] = {OptimizerKind::sgd, OptimizerKind::sgd_momentum, OptimizerKind::adam};
  for (int trial = 0; trial < 300; ++trial) {
    const auto arch = random_arch(rng);
    const int n = parametric_layer_count(arch);
    const int z = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
    const int B = 1 + static_cast<int>(rng.below(64));
    const OptimizerKind k = kinds[trial % 3];
    const auto c = estimate_cost(make_freeze_plan(arch, z), arch, B, k);
    const auto h = hand_count(arch, z, B, state_scalars_per_param(k));
    CHECK(c.flops_per_step == h.flops);
    CHECK(c.peak_bytes == h.bytes);
    CHECK(c.peak_bytes == c.parameter_bytes + c.gradient_bytes + c.optimizer_state_bytes + c.activation_bytes);
  }
}

TEST_CASE("estimated cost strictly increases with z", "[cost][property]") {
  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const auto arch = random_arch(rng);
    const int B = 1 + static_cast<int>(rng.below(32));
    const int n = parametric_layer_count(arch);
    for (int z1 = 1; z1 <= n; ++z1)
      for (int z2 = z1 + 1; z2 <= n; ++z2)
        for (auto k : {OptimizerKind::sgd, OptimizerKind::adam}) {
          const auto a = estimate_cost(make_freeze_plan(arch, z1), arch, B, k);
          const auto b = estimate_cost(make_freeze_plan(arch, z2), arch, B, k);
          CHECK(a.flops_per_step < b.flops_per_step);
          CHECK(a.peak_bytes < b.peak_bytes);
        }
  }
}

TEST_CASE("measured FLOPs equal the estimate and peak stays within one batch buffer", "[measure]") {
  const auto arch = make_mlp(2, {{16, Activation::tanh}, {16, Activation::tanh}, {16, Activation::tanh}, {2, Activation::identity}});
  TaskSpec spec;
  spec.train_size = 64;
  spec.validation_size = 8;
  const Task task = make_task(spec);
  const Batch batch = head_batch(task.train, 32);
  const Network net = init_network(arch, 3);
  HyperparamConfig hp;
  std::uint64_t prev_peak = 0;
  for (int z = 1; z <= 4; ++z) {
    const auto plan = make_freeze_plan(arch, z);
    const auto est = estimate_cost(plan, arch, 32, OptimizerKind::adam);
    const auto m = measure_step(net, plan, batch, hp, Objective::cross_entropy, 10, 10);
    INFO("z = " << z);
    CHECK(m.measured_flops == est.flops_per_step);
    CHECK(m.peak_tracked_bytes >= est.peak_bytes);
    CHECK(m.peak_tracked_bytes <= est.peak_bytes + batch_buffer_bytes(arch, 32));
    CHECK(m.peak_tracked_bytes > prev_peak);
    CHECK(m.warmup_passes == 10);
    CHECK(m.measured_passes == 10);
    prev_peak = m.peak_tracked_bytes;
  }
}

TEST_CASE("single measured pass without warmup", "[measure]") {
  const auto arch = make_mlp(2, {{4, Activation::tanh}, {2, Activation::identity}});
  TaskSpec spec;
  spec.train_size = 16;
  spec.validation_size = 4;
  const Task task = make_task(spec);
  const auto m = measure_step(init_network(arch, 0), make_freeze_plan(arch, 1), head_batch(task.train, 8), HyperparamConfig{},
                              Objective::cross_entropy, 0, 1);
  CHECK(m.measured_passes == 1);
  CHECK(m.warmup_passes == 0);
  CHECK(m.mean_step_wall_ms >= 0.0);
  CHECK_THROWS_AS(measure_step(init_network(arch, 0), make_freeze_plan(arch, 1), head_batch(task.train, 8),
                               HyperparamConfig{}, Objective::cross_entropy, 0, 0),
                  ConfigError);
}
