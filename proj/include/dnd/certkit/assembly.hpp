#pragma once

#include <span>
#include <string>
#include <vector>

#include "dnd/certkit/qsr.hpp"
#include "dnd/certkit/slope.hpp"
#include "dnd/errors.hpp"
#include "dnd/matkit/blocks.hpp"
#include "dnd/neuralfield/mlp.hpp"

namespace dnd::cert {

// Quadratic-form weights tying network input and output increments.
struct PBlocks {
  DenseMatrix p11;  // n0 x n0
  DenseMatrix p12;  // n0 x nl
  DenseMatrix p21;  // nl x n0
  DenseMatrix p22;  // nl x nl

  // P11 = [[Q, S], [Sᵀ, R]], P12 = P21 = 0.
  static PBlocks from_qsr(const QsrSpec& qsr, const DenseMatrix& p22) {
    const DenseMatrix p11 = qsr.supply_matrix();
    return {p11, DenseMatrix(p11.rows(), p22.rows()), DenseMatrix(p22.rows(), p11.rows()), p22};
  }

  void validate(std::size_t n0, std::size_t nl) const {
    detail::require(p11.rows() == n0 && p11.cols() == n0, "PBlocks: P11 must be n0 x n0");
    detail::require(p22.rows() == nl && p22.cols() == nl, "PBlocks: P22 must be nl x nl");
    detail::require(p12.rows() == n0 && p12.cols() == nl, "PBlocks: P12 must be n0 x nl");
    detail::require(p21.rows() == nl && p21.cols() == n0, "PBlocks: P21 must be nl x n0");
    detail::require(p11.is_symmetric(1e-12) && p22.is_symmetric(1e-12), "PBlocks: P11 and P22 must be symmetric");
    detail::require(p12.transpose() == p21, "PBlocks: P21 must equal P12ᵀ");
  }
};

// lambda scales the whole slope term; lambdas[i] weights layer i's slope inequality.
// Only the products lambda * lambdas[i] enter M_L, so lambda = 1 loses no generality.
struct Multipliers {
  double lambda = 1.0;
  std::vector<double> lambdas;

  friend bool operator==(const Multipliers&, const Multipliers&) = default;
};

namespace internal {

inline std::vector<std::size_t> block_offsets(const std::vector<std::size_t>& dims) {
  std::vector<std::size_t> off(dims.size() + 1, 0);
  for (std::size_t k = 0; k < dims.size(); ++k) off[k + 1] = off[k] + dims[k];
  return off;
}

inline void check_multipliers(const nn::Mlp& net, const Multipliers& mult) {
  detail::require(mult.lambdas.size() == net.num_layers(), "multipliers: need one lambda per layer (got " +
                                                             std::to_string(mult.lambdas.size()) + ")");
  detail::require(mult.lambda >= 0.0, "multipliers: lambda must be non-negative");
  for (double l : mult.lambdas) detail::require(l >= 0.0, "multipliers: layer multipliers must be non-negative");
}

// a[r0.., c0..] += coef * b
inline void add_scaled(DenseMatrix& a, std::size_t r0, std::size_t c0, const DenseMatrix& b, double coef) {
  for (std::size_t r = 0; r < b.rows(); ++r)
    for (std::size_t c = 0; c < b.cols(); ++c) a(r0 + r, c0 + c) += coef * b(r, c);
}

inline void add_scaled_transpose(DenseMatrix& a, std::size_t r0, std::size_t c0, const DenseMatrix& b, double coef) {
  for (std::size_t r = 0; r < b.rows(); ++r)
    for (std::size_t c = 0; c < b.cols(); ++c) a(r0 + c, c0 + r) += coef * b(r, c);
}

}  // namespace internal

// Stacked slope inequalities of all layers: block-tridiagonal with
//   (i-1, i-1) += lambda_i p_i W_iᵀW_i,   (i, i) += lambda_i I,   (i, i-1) = -lambda_i m_i W_i.
inline DenseMatrix build_st(const nn::Mlp& net, const Multipliers& mult) {
  internal::check_multipliers(net, mult);
  const auto dims = net.dims();
  const auto off = internal::block_offsets(dims);
  DenseMatrix st(off.back(), off.back());
  for (std::size_t i = 1; i <= net.num_layers(); ++i) {
    const nn::Layer& layer = net.layer(i - 1);
    const auto [p, m] = slope_constants(layer.activation);
    const double li = mult.lambdas[i - 1];
    const DenseMatrix g = mat::gram(layer.weight);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) st(off[i - 1] + r, off[i - 1] + c) += li * p * g(r, c);
    for (std::size_t r = 0; r < dims[i]; ++r) st(off[i] + r, off[i] + r) += li;
    internal::add_scaled(st, off[i], off[i - 1], layer.weight, -li * m);
    internal::add_scaled_transpose(st, off[i - 1], off[i], layer.weight, -li * m);
  }
  return st;
}

// P11 and P22 on the first and last diagonal blocks, P12/P21 in the corners, zero elsewhere.
inline DenseMatrix build_pl(const PBlocks& pb, const std::vector<std::size_t>& dims) {
  detail::require(dims.size() >= 2, "build_pl: need at least one layer");
  pb.validate(dims.front(), dims.back());
  const auto off = internal::block_offsets(dims);
  const std::size_t last = off[dims.size() - 1];
  DenseMatrix pl(off.back(), off.back());
  mat::add_block(pl, 0, 0, pb.p11);
  mat::add_block(pl, 0, last, pb.p12);
  mat::add_block(pl, last, 0, pb.p21);
  mat::add_block(pl, last, last, pb.p22);
  return pl;
}

// The certificate matrix, assembled block by block:
//   (0, 0)      P11 + lambda lambda_1 p_1 W_1ᵀW_1
//   (k, k)      lambda lambda_k I + lambda lambda_{k+1} p_{k+1} W_{k+1}ᵀW_{k+1},   0 < k < l
//   (l, l)      P22 + lambda lambda_l I
//   (k, k-1)    -lambda lambda_k m_k W_k   (and its transpose above the diagonal)
//   (0, l)      P12, (l, 0) P21
// For a single-layer network the corner and the off-diagonal coupling share a block and add.
inline DenseMatrix build_ml(const nn::Mlp& net, const PBlocks& pb, const Multipliers& mult) {
  internal::check_multipliers(net, mult);
  const auto dims = net.dims();
  pb.validate(dims.front(), dims.back());
  const auto off = internal::block_offsets(dims);
  const std::size_t l = net.num_layers();
  const double lam = mult.lambda;

  DenseMatrix ml(off.back(), off.back());
  for (std::size_t k = 0; k <= l; ++k) {
    const std::size_t o = off[k];
    if (k == 0) mat::add_block(ml, o, o, pb.p11);
    if (k == l) mat::add_block(ml, o, o, pb.p22);
    if (k > 0)
      for (std::size_t r = 0; r < dims[k]; ++r) ml(o + r, o + r) += lam * mult.lambdas[k - 1];
    if (k < l) {
      const nn::Layer& next = net.layer(k);
      const double coef = mult.lambdas[k] * slope_constants(next.activation).p;
      const DenseMatrix g = mat::gram(next.weight);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) ml(o + r, o + c) += lam * (coef * g(r, c));
    }
  }
  for (std::size_t k = 1; k <= l; ++k) {
    const nn::Layer& layer = net.layer(k - 1);
    const double coef = lam * (-mult.lambdas[k - 1] * slope_constants(layer.activation).m);
    internal::add_scaled(ml, off[k], off[k - 1], layer.weight, coef);
    internal::add_scaled_transpose(ml, off[k - 1], off[k], layer.weight, coef);
  }
  mat::add_block(ml, 0, off[l], pb.p12);
  mat::add_block(ml, off[l], 0, pb.p21);
  return ml;
}

// [dz0; dzl]ᵀ [[P11, P12], [P21, P22]] [dz0; dzl] for the network increments between two inputs.
inline double lemma1_quadratic(const nn::Mlp& net, std::span<const double> z_a, std::span<const double> z_b,
                               const PBlocks& pb) {
  detail::require(z_a.size() == net.input_dim() && z_b.size() == net.input_dim(),
                  "lemma1_quadratic: inputs must have the network input width");
  pb.validate(net.input_dim(), net.output_dim());
  Vector dz0(z_a.size()), dzl(net.output_dim());
  for (std::size_t i = 0; i < z_a.size(); ++i) dz0[i] = z_b[i] - z_a[i];
  const Vector fa = net.forward(z_a), fb = net.forward(z_b);
  for (std::size_t i = 0; i < dzl.size(); ++i) dzl[i] = fb[i] - fa[i];
  return mat::quadratic_form(pb.p11, dz0) + mat::dot(dz0, mat::matvec(pb.p12, dzl)) +
         mat::dot(dzl, mat::matvec(pb.p21, dz0)) + mat::quadratic_form(pb.p22, dzl);
}

}  // namespace dnd::cert
