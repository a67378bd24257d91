#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "dnd/errors.hpp"

namespace dnd::nn {

enum class ActivationKind { relu, leaky_relu, tanh, sigmoid, identity };

// Scalar activation applied element-wise, with its slope bounds [alpha, beta].
struct Activation {
  ActivationKind kind = ActivationKind::identity;
  double leak = 0.0;  // only meaningful for leaky_relu: phi(x) = max(leak * x, x)

  static Activation relu() { return {ActivationKind::relu, 0.0}; }
  static Activation leaky_relu(double a) {
    detail::require(a > 0.0 && std::isfinite(a), "leaky_relu: slope must be positive");
    return {ActivationKind::leaky_relu, a};
  }
  static Activation tanh() { return {ActivationKind::tanh, 0.0}; }
  static Activation sigmoid() { return {ActivationKind::sigmoid, 0.0}; }
  static Activation identity() { return {ActivationKind::identity, 0.0}; }

  double alpha() const noexcept {
    switch (kind) {
      case ActivationKind::leaky_relu: return std::min(leak, 1.0);
      case ActivationKind::identity: return 1.0;
      default: return 0.0;
    }
  }

  double beta() const noexcept {
    switch (kind) {
      case ActivationKind::leaky_relu: return std::max(leak, 1.0);
      default: return 1.0;
    }
  }

  double apply(double x) const noexcept {
    switch (kind) {
      case ActivationKind::relu: return x > 0.0 ? x : 0.0;
      case ActivationKind::leaky_relu: return x > 0.0 ? beta() * x : alpha() * x;
      case ActivationKind::tanh: return std::tanh(x);
      case ActivationKind::sigmoid: return 1.0 / (1.0 + std::exp(-x));
      case ActivationKind::identity: return x;
    }
    return x;
  }

  // One-sided at the kinks: the slope of the left piece is used at x = 0.
  double derivative(double x) const noexcept {
    switch (kind) {
      case ActivationKind::relu: return x > 0.0 ? 1.0 : 0.0;
      case ActivationKind::leaky_relu: return x > 0.0 ? beta() : alpha();
      case ActivationKind::tanh: {
        const double t = std::tanh(x);
        return 1.0 - t * t;
      }
      case ActivationKind::sigmoid: {
        const double s = 1.0 / (1.0 + std::exp(-x));
        return s * (1.0 - s);
      }
      case ActivationKind::identity: return 1.0;
    }
    return 1.0;
  }

  friend bool operator==(const Activation&, const Activation&) = default;
};

inline std::string to_string(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::relu: return "relu";
    case ActivationKind::leaky_relu: return "leaky_relu";
    case ActivationKind::tanh: return "tanh";
    case ActivationKind::sigmoid: return "sigmoid";
    case ActivationKind::identity: return "identity";
  }
  return "identity";
}

inline ActivationKind activation_kind_from_string(const std::string& name) {
  if (name == "relu") return ActivationKind::relu;
  if (name == "leaky_relu") return ActivationKind::leaky_relu;
  if (name == "tanh") return ActivationKind::tanh;
  if (name == "sigmoid") return ActivationKind::sigmoid;
  if (name == "identity") return ActivationKind::identity;
  throw ContractViolation("unknown activation '" + name + "'");
}

}  // namespace dnd::nn
