#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "dnd.hpp"

namespace testing_support {

using dnd::mat::DenseMatrix;
using dnd::mat::Vector;

inline DenseMatrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> d(-scale, scale);
  DenseMatrix m(rows, cols);
  for (double& v : m.data()) v = d(rng);
  return m;
}

inline DenseMatrix random_symmetric(std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
  const DenseMatrix a = random_matrix(n, n, rng, scale);
  DenseMatrix s(n, n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) s(r, c) = 0.5 * (a(r, c) + a(c, r));
  return s;
}

inline Vector random_vector(std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> d(-scale, scale);
  Vector v(n);
  for (double& x : v) x = d(rng);
  return v;
}

inline dnd::nn::Activation random_activation(std::mt19937_64& rng) {
  switch (std::uniform_int_distribution<int>(0, 4)(rng)) {
    case 0: return dnd::nn::Activation::relu();
    case 1: return dnd::nn::Activation::leaky_relu(0.2);
    case 2: return dnd::nn::Activation::tanh();
    case 3: return dnd::nn::Activation::sigmoid();
    default: return dnd::nn::Activation::identity();
  }
}

// n0 -> hidden... -> n0 with random weights of the given scale.
inline dnd::nn::Mlp random_net(const std::vector<std::size_t>& dims, dnd::nn::Activation hidden, std::mt19937_64& rng,
                               double scale = 1.0) {
  std::vector<dnd::nn::Layer> layers;
  for (std::size_t i = 1; i < dims.size(); ++i)
    layers.push_back({random_matrix(dims[i], dims[i - 1], rng, scale), random_vector(dims[i], rng, scale),
                      i + 1 == dims.size() ? dnd::nn::Activation::identity() : hidden});
  return dnd::nn::Mlp(std::move(layers));
}

inline std::vector<double> random_multipliers(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(0.0, 2.0);
  std::vector<double> out(n);
  for (double& x : out) x = d(rng);
  return out;
}

// Gaussian elimination with partial pivoting.
inline Vector solve(DenseMatrix a, Vector b) {
  const std::size_t n = a.rows();
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t r = k + 1; r < n; ++r)
      if (std::abs(a(r, k)) > std::abs(a(piv, k))) piv = r;
    if (piv != k) {
      for (std::size_t c = 0; c < n; ++c) std::swap(a(k, c), a(piv, c));
      std::swap(b[k], b[piv]);
    }
    const double d = a(k, k) == 0.0 ? 1e-300 : a(k, k);
    for (std::size_t r = k + 1; r < n; ++r) {
      const double f = a(r, k) / d;
      for (std::size_t c = k; c < n; ++c) a(r, c) -= f * a(k, c);
      b[r] -= f * b[k];
    }
  }
  Vector x(n);
  for (std::size_t k = n; k-- > 0;) {
    double s = b[k];
    for (std::size_t c = k + 1; c < n; ++c) s -= a(k, c) * x[c];
    x[k] = s / (a(k, k) == 0.0 ? 1e-300 : a(k, k));
  }
  return x;
}

// Shifted inverse iteration; returns the Rayleigh quotient of the converged vector.
inline double inverse_iteration(const DenseMatrix& a, double shift, std::mt19937_64& rng, int iterations = 6) {
  const std::size_t n = a.rows();
  DenseMatrix s = a;
  for (std::size_t i = 0; i < n; ++i) s(i, i) -= shift;
  Vector x = random_vector(n, rng);
  for (int it = 0; it < iterations; ++it) {
    x = solve(s, x);
    const double nx = dnd::mat::norm2(x);
    for (double& v : x) v /= nx;
  }
  return dnd::mat::quadratic_form(a, x);
}

}  // namespace testing_support
