#pragma once

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "freezehpo/core/error.hpp"
#include "freezehpo/core/rng.hpp"
#include "freezehpo/core/types.hpp"

namespace freezehpo {

// A Cartesian product of finite value lists. An empty list leaves the
// dimension at its HyperparamConfig default.
struct SearchGrid {
  std::vector<double> learning_rate;
  std::vector<double> weight_decay;
  std::vector<std::string> optimizer;
  std::vector<double> beta1;
  std::vector<double> beta2;
  std::vector<double> warmup_fraction;
  std::vector<double> cooldown_fraction;

  std::size_t size() const {
    auto n = [](std::size_t k) { return k == 0 ? std::size_t{1} : k; };
    return n(learning_rate.size()) * n(weight_decay.size()) * n(optimizer.size()) * n(beta1.size()) *
           n(beta2.size()) * n(warmup_fraction.size()) * n(cooldown_fraction.size());
  }
};

// Union of grids; grids allow conditional spaces (e.g. beta2 only for Adam).
struct SearchSpace {
  std::vector<SearchGrid> grids;

  // Every configuration, ids 0..N-1 in grid order, learning rate varying slowest.
  std::vector<HyperparamConfig> enumerate() const {
    std::vector<HyperparamConfig> out;
    for (const auto& g : grids) {
      auto dim = [](const std::vector<double>& v, double d) { return v.empty() ? std::vector<double>{d} : v; };
      const HyperparamConfig d;
      const auto lrs = dim(g.learning_rate, d.learning_rate);
      const auto wds = dim(g.weight_decay, d.weight_decay);
      const auto opts = g.optimizer.empty() ? std::vector<std::string>{d.optimizer} : g.optimizer;
      const auto b1s = dim(g.beta1, d.beta1);
      const auto b2s = dim(g.beta2, d.beta2);
      const auto wus = dim(g.warmup_fraction, d.warmup_fraction);
      const auto cds = dim(g.cooldown_fraction, d.cooldown_fraction);
      for (double lr : lrs)
        for (double wd : wds)
          for (const auto& opt : opts)
            for (double b1 : b1s)
              for (double b2 : b2s)
                for (double wu : wus)
                  for (double cd : cds) {
                    HyperparamConfig c{static_cast<int>(out.size()), lr, wd, opt, b1, b2, wu, cd};
                    c.optimizer_kind();  // validates the optimizer name
                    out.push_back(c);
                  }
    }
    return out;
  }

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& g : grids) n += g.size();
    return n;
  }
};

// Deterministic subset of `n` configurations (all of them when n == size).
inline std::vector<HyperparamConfig> sample_configs(const std::vector<HyperparamConfig>& all, std::size_t n,
                                                    std::uint64_t seed) {
  if (n > all.size())
    throw ConfigError("n_configs=" + std::to_string(n) + " exceeds the search space size " + std::to_string(all.size()));
  if (n == all.size()) return all;
  std::vector<std::size_t> idx(all.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(mix_seed(seed, 0xc0f1));
  rng.shuffle(idx);
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  std::vector<HyperparamConfig> out;
  for (auto i : idx) out.push_back(all[i]);
  return out;
}

namespace detail {

inline void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (!allowed.contains(k)) throw ConfigError(where + ": unknown key '" + k + "'");
}

}  // namespace detail

inline void from_json(const json& j, SearchGrid& g) {
  detail::check_keys(j,
                     {"learning_rate", "weight_decay", "optimizer", "beta1", "beta2", "warmup_fraction",
                      "cooldown_fraction"},
                     "search_space grid");
  auto nums = [&](const char* key) {
    if (!j.contains(key)) return std::vector<double>{};
    if (!j[key].is_array()) throw ConfigError(std::string("search_space.") + key + " must be an array");
    return j[key].get<std::vector<double>>();
  };
  g.learning_rate = nums("learning_rate");
  g.weight_decay = nums("weight_decay");
  g.beta1 = nums("beta1");
  g.beta2 = nums("beta2");
  g.warmup_fraction = nums("warmup_fraction");
  g.cooldown_fraction = nums("cooldown_fraction");
  if (j.contains("optimizer")) g.optimizer = j["optimizer"].get<std::vector<std::string>>();
}

inline void to_json(json& j, const SearchGrid& g) {
  j = json::object();
  if (!g.learning_rate.empty()) j["learning_rate"] = g.learning_rate;
  if (!g.weight_decay.empty()) j["weight_decay"] = g.weight_decay;
  if (!g.optimizer.empty()) j["optimizer"] = g.optimizer;
  if (!g.beta1.empty()) j["beta1"] = g.beta1;
  if (!g.beta2.empty()) j["beta2"] = g.beta2;
  if (!g.warmup_fraction.empty()) j["warmup_fraction"] = g.warmup_fraction;
  if (!g.cooldown_fraction.empty()) j["cooldown_fraction"] = g.cooldown_fraction;
}

inline void from_json(const json& j, SearchSpace& s) {
  detail::check_keys(j, {"grids"}, "search_space");
  s.grids = j.at("grids").get<std::vector<SearchGrid>>();
  if (s.grids.empty()) throw ConfigError("search_space.grids must not be empty");
}

inline void to_json(json& j, const SearchSpace& s) { j = json{{"grids", s.grids}}; }

}  // namespace freezehpo
