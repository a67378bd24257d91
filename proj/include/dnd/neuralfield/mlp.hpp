#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dnd/errors.hpp"
#include "dnd/matkit/dense_matrix.hpp"
#include "dnd/neuralfield/activation.hpp"
#include "dnd/simkit/dataset.hpp"

namespace dnd::nn {

using mat::DenseMatrix;
using mat::Vector;

struct Layer {
  DenseMatrix weight;  // n_i x n_{i-1}
  Vector bias;         // n_i
  Activation activation;

  friend bool operator==(const Layer&, const Layer&) = default;
};

// Per-layer quantities recorded by a forward pass, enough to run the pass backwards.
struct ForwardTape {
  std::vector<Vector> inputs;  // z^{i-1} for each layer
  std::vector<Vector> pre;     // v_i = W_i z^{i-1} + b_i
  Vector output;
};

// Feed-forward vector field z -> z^l with z^i = phi_i(W_i z^{i-1} + b_i). The output layer
// carries no nonlinearity and input and output widths agree.
class Mlp {
 public:
  Mlp() = default;

  explicit Mlp(std::vector<Layer> layers) : layers_(std::move(layers)) { validate(); }

  // Weights and biases uniform in +-1/sqrt(fan_in).
  static Mlp random(const std::vector<std::size_t>& dims, Activation hidden, std::uint64_t seed) {
    detail::require(dims.size() >= 2, "Mlp::random: need at least input and output widths");
    auto rng = sim::seeded_engine(seed, 0x31);
    std::vector<Layer> layers;
    for (std::size_t i = 1; i < dims.size(); ++i) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(dims[i - 1]));
      std::uniform_real_distribution<double> dist(-bound, bound);
      Layer layer{DenseMatrix(dims[i], dims[i - 1]), Vector(dims[i]),
                  i + 1 == dims.size() ? Activation::identity() : hidden};
      for (double& w : layer.weight.data()) w = dist(rng);
      for (double& b : layer.bias) b = dist(rng);
      layers.push_back(std::move(layer));
    }
    return Mlp(std::move(layers));
  }

  void validate() const {
    detail::require(!layers_.empty(), "Mlp: no layers");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const Layer& l = layers_[i];
      detail::require(l.weight.rows() == l.bias.size(),
                      "Mlp: layer " + std::to_string(i) + " bias length does not match weight rows");
      if (i > 0)
        detail::require(l.weight.cols() == layers_[i - 1].weight.rows(),
                        "Mlp: layer " + std::to_string(i) + " input width does not chain");
    }
    detail::require(layers_.back().activation.kind == ActivationKind::identity,
                    "Mlp: output layer must be the identity");
    detail::require(input_dim() == output_dim(), "Mlp: a vector field needs equal input and output widths");
  }

  std::size_t num_layers() const noexcept { return layers_.size(); }
  std::size_t input_dim() const noexcept { return layers_.front().weight.cols(); }
  std::size_t output_dim() const noexcept { return layers_.back().weight.rows(); }

  std::vector<std::size_t> dims() const {
    std::vector<std::size_t> d{input_dim()};
    for (const Layer& l : layers_) d.push_back(l.weight.rows());
    return d;
  }

  const std::vector<Layer>& layers() const noexcept { return layers_; }
  const Layer& layer(std::size_t i) const { return layers_.at(i); }

  void set_weight(std::size_t i, DenseMatrix w) {
    Layer& l = layers_.at(i);
    detail::require(w.rows() == l.weight.rows() && w.cols() == l.weight.cols(),
                    "Mlp::set_weight: shape mismatch");
    l.weight = std::move(w);
  }

  void set_bias(std::size_t i, Vector b) {
    Layer& l = layers_.at(i);
    detail::require(b.size() == l.bias.size(), "Mlp::set_bias: length mismatch");
    l.bias = std::move(b);
  }

  Vector forward(std::span<const double> z) const { return run(z, nullptr); }

  Vector forward(std::span<const double> z, ForwardTape& tape) const { return run(z, &tape); }

  std::size_t parameter_count() const noexcept {
    std::size_t n = 0;
    for (const Layer& l : layers_) n += l.weight.size() + l.bias.size();
    return n;
  }

  friend bool operator==(const Mlp&, const Mlp&) = default;

 private:
  Vector run(std::span<const double> z, ForwardTape* tape) const {
    detail::require(z.size() == input_dim(), "Mlp::forward: input has length " + std::to_string(z.size()) +
                                                 ", expected " + std::to_string(input_dim()));
    if (tape) {
      tape->inputs.clear();
      tape->pre.clear();
    }
    Vector x(z.begin(), z.end());
    for (const Layer& l : layers_) {
      Vector v = l.bias;
      for (std::size_t r = 0; r < l.weight.rows(); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < l.weight.cols(); ++c) s += l.weight(r, c) * x[c];
        v[r] += s;
      }
      Vector y(v.size());
      for (std::size_t r = 0; r < v.size(); ++r) y[r] = l.activation.apply(v[r]);
      if (tape) {
        tape->inputs.push_back(std::move(x));
        tape->pre.push_back(std::move(v));
      }
      x = std::move(y);
    }
    if (tape) tape->output = x;
    return x;
  }

  std::vector<Layer> layers_;
};

inline Vector forward(const Mlp& net, std::span<const double> z) { return net.forward(z); }

enum class TrainableMask { all, biases_only };

// Parameter-shaped accumulator.
struct Gradient {
  std::vector<DenseMatrix> weights;
  std::vector<Vector> biases;

  static Gradient zeros_like(const Mlp& net) {
    Gradient g;
    for (const Layer& l : net.layers()) {
      g.weights.emplace_back(l.weight.rows(), l.weight.cols());
      g.biases.emplace_back(l.bias.size(), 0.0);
    }
    return g;
  }

  Gradient& operator+=(const Gradient& o) {
    for (std::size_t i = 0; i < weights.size(); ++i) {
      weights[i] += o.weights[i];
      for (std::size_t k = 0; k < biases[i].size(); ++k) biases[i][k] += o.biases[i][k];
    }
    return *this;
  }

  double norm() const {
    double s = 0.0;
    for (const auto& w : weights)
      for (double v : w.data()) s += v * v;
    for (const auto& b : biases)
      for (double v : b) s += v * v;
    return std::sqrt(s);
  }
};

// Reverse pass through one recorded forward evaluation. Adds parameter cotangents into `grad`
// (weights only when the mask allows) and returns the cotangent of the network input.
inline Vector backward(const Mlp& net, const ForwardTape& tape, std::span<const double> output_cotangent,
                       Gradient& grad, TrainableMask mask) {
  Vector g(output_cotangent.begin(), output_cotangent.end());
  for (std::size_t i = net.num_layers(); i-- > 0;) {
    const Layer& l = net.layer(i);
    const Vector& v = tape.pre[i];
    const Vector& x = tape.inputs[i];
    Vector vbar(v.size());
    for (std::size_t r = 0; r < v.size(); ++r) vbar[r] = g[r] * l.activation.derivative(v[r]);
    for (std::size_t r = 0; r < v.size(); ++r) grad.biases[i][r] += vbar[r];
    if (mask == TrainableMask::all) {
      DenseMatrix& gw = grad.weights[i];
      for (std::size_t r = 0; r < gw.rows(); ++r)
        for (std::size_t c = 0; c < gw.cols(); ++c) gw(r, c) += vbar[r] * x[c];
    }
    g = mat::matvec_transposed(l.weight, vbar);
  }
  return g;
}

// Layer-major flattening of every parameter: W_1 (row-major), b_1, W_2, b_2, ...
inline Vector flatten_parameters(const Mlp& net) {
  Vector out;
  out.reserve(net.parameter_count());
  for (const Layer& l : net.layers()) {
    out.insert(out.end(), l.weight.data().begin(), l.weight.data().end());
    out.insert(out.end(), l.bias.begin(), l.bias.end());
  }
  return out;
}

inline Vector flatten(const Gradient& g) {
  Vector out;
  for (std::size_t i = 0; i < g.weights.size(); ++i) {
    out.insert(out.end(), g.weights[i].data().begin(), g.weights[i].data().end());
    out.insert(out.end(), g.biases[i].begin(), g.biases[i].end());
  }
  return out;
}

inline Mlp with_parameters(const Mlp& net, std::span<const double> params) {
  detail::require(params.size() == net.parameter_count(), "with_parameters: wrong parameter count");
  std::vector<Layer> layers = net.layers();
  std::size_t k = 0;
  for (Layer& l : layers) {
    for (double& w : l.weight.data()) w = params[k++];
    for (double& b : l.bias) b = params[k++];
  }
  return Mlp(std::move(layers));
}

// Marks which flattened parameters are biases.
inline std::vector<bool> bias_mask(const Mlp& net) {
  std::vector<bool> out;
  for (const Layer& l : net.layers()) {
    out.insert(out.end(), l.weight.size(), false);
    out.insert(out.end(), l.bias.size(), true);
  }
  return out;
}

}  // namespace dnd::nn
