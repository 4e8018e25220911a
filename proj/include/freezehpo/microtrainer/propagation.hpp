#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "freezehpo/freezer/freeze_plan.hpp"
#include "freezehpo/microtrainer/network.hpp"
#include "freezehpo/microtrainer/task.hpp"
#include "freezehpo/microtrainer/tracking.hpp"

namespace freezehpo {

namespace detail {

inline void apply_activation(Activation a, std::span<double> v) {
  switch (a) {
    case Activation::relu:
      for (auto& x : v) x = x > 0.0 ? x : 0.0;
      break;
    case Activation::tanh:
      for (auto& x : v) x = std::tanh(x);
      break;
    case Activation::identity: break;
  }
}

// Multiplies g by act'(pre-activation), written in terms of the output y.
inline void scale_by_activation_derivative(Activation a, std::span<double> g, std::span<const double> y) {
  switch (a) {
    case Activation::relu:
      for (std::size_t k = 0; k < g.size(); ++k) g[k] = y[k] > 0.0 ? g[k] : 0.0;
      break;
    case Activation::tanh:
      for (std::size_t k = 0; k < g.size(); ++k) g[k] *= 1.0 - y[k] * y[k];
      break;
    case Activation::identity: break;
  }
}

// y[b, o] = act(sum_i x[b, i] W[o, i] + bias[o])
inline void dense_forward(const LayerSpec& l, const DenseParams& p, const double* x, double* y, int batch) {
  const std::size_t din = static_cast<std::size_t>(l.d_in), dout = static_cast<std::size_t>(l.d_out);
  for (int b = 0; b < batch; ++b) {
    const double* xr = x + static_cast<std::size_t>(b) * din;
    double* yr = y + static_cast<std::size_t>(b) * dout;
    for (std::size_t o = 0; o < dout; ++o) {
      const double* wr = p.weight.data() + o * din;
      double acc = p.bias[o];
      for (std::size_t i = 0; i < din; ++i) acc += wr[i] * xr[i];
      yr[o] = acc;
    }
  }
}

}  // namespace detail

inline std::uint64_t dense_flops(const LayerSpec& l, int batch) {
  return 2ULL * static_cast<std::uint64_t>(batch) * static_cast<std::uint64_t>(l.d_in) * static_cast<std::uint64_t>(l.d_out);
}

// Inference without retention or tracking.
inline std::vector<double> forward_only(const Network& net, std::span<const double> inputs, int batch) {
  std::vector<double> x(inputs.begin(), inputs.end());
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    const auto& l = net.layers()[i];
    if (l.has_params) {
      std::vector<double> y(static_cast<std::size_t>(batch) * static_cast<std::size_t>(l.d_out));
      detail::dense_forward(l, net.params(i), x.data(), y.data(), batch);
      x = std::move(y);
    }
    detail::apply_activation(l.activation, x);
  }
  return x;
}

// Mean loss over the batch. When `grad` is non-null it receives dL/doutput.
inline double loss_and_grad(std::span<const double> output, const Batch& batch, Objective objective, std::span<double> grad = {}) {
  const std::size_t B = static_cast<std::size_t>(batch.size);
  const std::size_t C = output.size() / B;
  double total = 0.0;
  if (objective == Objective::cross_entropy) {
    for (std::size_t b = 0; b < B; ++b) {
      const double* z = output.data() + b * C;
      const double mx = *std::max_element(z, z + C);
      double sum = 0.0;
      for (std::size_t c = 0; c < C; ++c) sum += std::exp(z[c] - mx);
      const double lse = mx + std::log(sum);
      const auto label = static_cast<std::size_t>(batch.labels[b]);
      total += lse - z[label];
      if (!grad.empty()) {
        for (std::size_t c = 0; c < C; ++c)
          grad[b * C + c] = (std::exp(z[c] - lse) - (c == label ? 1.0 : 0.0)) / static_cast<double>(B);
      }
    }
    return total / static_cast<double>(B);
  }
  const double denom = static_cast<double>(B * C);
  for (std::size_t k = 0; k < output.size(); ++k) {
    const double d = output[k] - batch.targets[k];
    total += d * d;
    if (!grad.empty()) grad[k] = 2.0 * d / denom;
  }
  return total / denom;
}

inline double evaluate_loss(const Network& net, const Batch& batch, Objective objective) {
  const auto out = forward_only(net, batch.inputs, batch.size);
  return loss_and_grad(out, batch, objective);
}

inline double evaluate_loss(const Network& net, const Dataset& data, Objective objective, std::size_t chunk = 512) {
  double total = 0.0;
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    const std::size_t n = std::min(chunk, data.size() - start);
    std::vector<std::size_t> rows(n);
    for (std::size_t i = 0; i < n; ++i) rows[i] = start + i;
    total += evaluate_loss(net, gather(data, rows), objective) * static_cast<double>(n);
  }
  return total / static_cast<double>(data.size());
}

struct DenseGrad {
  TrackedBuffer weight;
  TrackedBuffer bias;
};

// Gradient buffers, allocated only for trainable parametric layers.
class Gradients {
 public:
  Gradients() = default;
  Gradients(const Network& net, const FreezePlan& plan, MemoryTracker* tracker) : layers_(net.layers().size()) {
    check_plan_matches(plan, net.layers());
    int p = 0;
    for (std::size_t i = 0; i < net.layers().size(); ++i) {
      const auto& l = net.layers()[i];
      if (!l.has_params) continue;
      if (!plan.is_frozen(p)) {
        layers_[i].weight = TrackedBuffer(tracker, static_cast<std::size_t>(l.d_in) * static_cast<std::size_t>(l.d_out));
        layers_[i].bias = TrackedBuffer(tracker, static_cast<std::size_t>(l.d_out));
      }
      ++p;
    }
  }

  bool has(std::size_t layer) const { return layer < layers_.size() && !layers_[layer].weight.empty(); }
  DenseGrad& at(std::size_t layer) { return layers_.at(layer); }
  const DenseGrad& at(std::size_t layer) const { return layers_.at(layer); }
  std::size_t layer_count() const { return layers_.size(); }

  std::size_t buffer_count() const {
    std::size_t n = 0;
    for (const auto& g : layers_) n += g.weight.empty() ? 0 : 1;
    return n;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& g : layers_) n += g.weight.size() + g.bias.size();
    return n;
  }

 private:
  std::vector<DenseGrad> layers_;
};

// Forward/backward under a freeze plan. Frozen-prefix activations are
// released as soon as the next layer has consumed them; the retained set is
// the input of every trainable-region layer plus the network output.
// Backward stops at the first trainable layer: it computes that layer's
// weight gradient but no input gradient.
class Propagator {
 public:
  Propagator(const Network& net, const FreezePlan& plan, MemoryTracker* tracker = nullptr, FlopCounter* flops = nullptr)
      : net_(&net), tracker_(tracker), flops_(flops), retained_(net.layers().size()) {
    check_plan_matches(plan, net.layers());
    boundary_ = trainable_boundary(plan, net.layers());
  }

  std::size_t boundary() const { return boundary_; }
  bool pending() const { return pending_; }

  const TrackedBuffer& forward(std::span<const double> inputs, int batch) {
    const auto& arch = net_->layers();
    if (inputs.size() != static_cast<std::size_t>(batch) * static_cast<std::size_t>(arch.front().d_in))
      throw UsageError("input size does not match batch x input_dim");
    for (auto& r : retained_) r.reset();
    output_.reset();
    batch_ = batch;
    TrackedBuffer x(tracker_, inputs.size());
    std::copy(inputs.begin(), inputs.end(), x.data());
    for (std::size_t i = 0; i < arch.size(); ++i) {
      const auto& l = arch[i];
      TrackedBuffer y(tracker_, static_cast<std::size_t>(batch) * static_cast<std::size_t>(l.d_out));
      if (l.has_params) {
        detail::dense_forward(l, net_->params(i), x.data(), y.data(), batch);
        if (flops_) flops_->forward += dense_flops(l, batch);
      } else {
        std::copy(x.vec().begin(), x.vec().end(), y.data());
      }
      detail::apply_activation(l.activation, y.vec());
      if (i >= boundary_)
        retained_[i] = std::move(x);
      else
        x.reset();
      x = std::move(y);
    }
    output_ = std::move(x);
    pending_ = true;
    return output_;
  }

  const TrackedBuffer& output() const { return output_; }

  std::size_t retained_scalars() const {
    std::size_t n = output_.size();
    for (const auto& r : retained_) n += r.size();
    return n;
  }

  // Consumes the state left by forward(); `output_grad` is dL/doutput.
  void backward(TrackedBuffer output_grad, Gradients& grads) {
    if (!pending_) throw UsageError("backward called without a matching forward pass");
    const auto& arch = net_->layers();
    const std::size_t B = static_cast<std::size_t>(batch_);
    if (output_grad.size() != output_.size()) throw UsageError("output gradient size mismatch");
    TrackedBuffer g = std::move(output_grad);
    for (std::size_t i = arch.size(); i-- > boundary_;) {
      const auto& l = arch[i];
      TrackedBuffer& y = (i + 1 == arch.size()) ? output_ : retained_[i + 1];
      detail::scale_by_activation_derivative(l.activation, g.vec(), y.vec());
      y.reset();
      const TrackedBuffer& x = retained_[i];
      const std::size_t din = static_cast<std::size_t>(l.d_in), dout = static_cast<std::size_t>(l.d_out);
      if (l.has_params) {
        if (!grads.has(i)) throw UsageError("gradient buffers do not match the freeze plan");
        auto& dw = grads.at(i).weight;
        auto& db = grads.at(i).bias;
        std::fill(dw.vec().begin(), dw.vec().end(), 0.0);
        std::fill(db.vec().begin(), db.vec().end(), 0.0);
        for (std::size_t b = 0; b < B; ++b) {
          const double* xr = x.data() + b * din;
          const double* gr = g.data() + b * dout;
          for (std::size_t o = 0; o < dout; ++o) {
            const double go = gr[o];
            db[o] += go;
            double* dwr = dw.data() + o * din;
            for (std::size_t k = 0; k < din; ++k) dwr[k] += go * xr[k];
          }
        }
        if (flops_) flops_->wgrad += dense_flops(l, batch_);
      }
      if (i == boundary_) {
        g.reset();
        break;
      }
      if (l.has_params) {
        TrackedBuffer gp(tracker_, B * din);
        const auto& w = net_->params(i).weight;
        for (std::size_t b = 0; b < B; ++b) {
          const double* gr = g.data() + b * dout;
          double* out = gp.data() + b * din;
          for (std::size_t o = 0; o < dout; ++o) {
            const double go = gr[o];
            const double* wr = w.data() + o * din;
            for (std::size_t k = 0; k < din; ++k) out[k] += go * wr[k];
          }
        }
        if (flops_) flops_->dgrad += dense_flops(l, batch_);
        g = std::move(gp);
      }
    }
    for (auto& r : retained_) r.reset();
    output_.reset();
    pending_ = false;
  }

 private:
  const Network* net_;
  MemoryTracker* tracker_;
  FlopCounter* flops_;
  std::size_t boundary_ = 0;
  std::vector<TrackedBuffer> retained_;  // retained_[i] = input of layer i
  TrackedBuffer output_;
  int batch_ = 0;
  bool pending_ = false;
};

}  // namespace freezehpo
