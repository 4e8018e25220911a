#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "freezehpo/core/rng.hpp"
#include "freezehpo/microtrainer/layer_spec.hpp"

namespace freezehpo {

// Parameters of one dense layer; weight is row-major d_out x d_in.
struct DenseParams {
  std::vector<double> weight;
  std::vector<double> bias;

  std::size_t size() const { return weight.size() + bias.size(); }
  friend bool operator==(const DenseParams&, const DenseParams&) = default;
};

class Network {
 public:
  // Weights ~ U(-1/sqrt(d_in), 1/sqrt(d_in)) drawn layer by layer in
  // row-major order from one seeded stream; biases start at zero.
  static Network init(Architecture arch, std::uint64_t seed) {
    validate_architecture(arch);
    Network net;
    net.arch_ = std::move(arch);
    net.init_seed_ = seed;
    Rng rng(seed);
    net.params_.resize(net.arch_.size());
    for (std::size_t i = 0; i < net.arch_.size(); ++i) {
      const auto& l = net.arch_[i];
      if (!l.has_params) continue;
      auto& p = net.params_[i];
      const double bound = 1.0 / std::sqrt(static_cast<double>(l.d_in));
      p.weight.resize(static_cast<std::size_t>(l.d_in) * static_cast<std::size_t>(l.d_out));
      for (auto& w : p.weight) w = rng.uniform(-bound, bound);
      p.bias.assign(static_cast<std::size_t>(l.d_out), 0.0);
    }
    return net;
  }

  const Architecture& layers() const { return arch_; }
  std::uint64_t init_seed() const { return init_seed_; }
  int input_dim() const { return arch_.front().d_in; }
  int output_dim() const { return arch_.back().d_out; }

  const DenseParams& params(std::size_t layer) const { return params_.at(layer); }
  DenseParams& params(std::size_t layer) { return params_.at(layer); }

  std::uint64_t parameter_count() const { return freezehpo::parameter_count(arch_); }
  int parametric_layer_count() const { return freezehpo::parametric_layer_count(arch_); }

  friend bool operator==(const Network& a, const Network& b) { return a.arch_ == b.arch_ && a.params_ == b.params_; }

 private:
  Network() = default;

  Architecture arch_;
  std::vector<DenseParams> params_;
  std::uint64_t init_seed_ = 0;
};

inline Network init_network(Architecture arch, std::uint64_t seed) { return Network::init(std::move(arch), seed); }

}  // namespace freezehpo
