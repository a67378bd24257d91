#pragma once

#include <cmath>
#include <span>
#include <string>
#include <variant>

#include "dnd/errors.hpp"
#include "dnd/matkit/blocks.hpp"
#include "dnd/matkit/dense_matrix.hpp"

namespace dnd::cert {

using mat::DenseMatrix;
using mat::Vector;

// Supply-rate matrices for incremental dissipativity: the rate is
// [dy; du]ᵀ [[Q, S], [Sᵀ, R]] [dy; du].
struct QsrSpec {
  DenseMatrix q;  // ny x ny
  DenseMatrix s;  // ny x nu
  DenseMatrix r;  // nu x nu

  std::size_t ny() const noexcept { return q.rows(); }
  std::size_t nu() const noexcept { return r.rows(); }

  void validate() const {
    detail::require(q.square() && r.square(), "QsrSpec: Q and R must be square");
    detail::require(s.rows() == ny() && s.cols() == nu(), "QsrSpec: S must be ny x nu");
    detail::require(q.is_symmetric(1e-12) && r.is_symmetric(1e-12), "QsrSpec: Q and R must be symmetric");
  }

  // [[Q, S], [Sᵀ, R]]
  DenseMatrix supply_matrix() const {
    return mat::frob_block_assemble({{q, s}, {s.transpose(), r}});
  }

  friend bool operator==(const QsrSpec&, const QsrSpec&) = default;
};

struct L2Gain {
  double gamma;
};
struct Passivity {};
struct StrictPassivity {
  double eps;
  double delta;
};
struct Conicity {
  double c;
  double r;
};
struct Sector {
  double a;
  double b;
};

using QsrPreset = std::variant<L2Gain, Passivity, StrictPassivity, Conicity, Sector>;

// Q = -eps I, S = s_scale I, R = -delta I. No sign checks: used for relaxed searches too.
inline QsrSpec strict_passivity_qsr(double eps, double delta, std::size_t ny, std::size_t nu, double s_scale = 0.5) {
  return {DenseMatrix::identity(ny, -eps), DenseMatrix::eye(ny, nu, s_scale), DenseMatrix::identity(nu, -delta)};
}

inline QsrSpec qsr_preset(const QsrPreset& preset, std::size_t ny, std::size_t nu) {
  detail::require(ny > 0 && nu > 0, "qsr_preset: dimensions must be positive");
  using mat::DenseMatrix;
  struct Builder {
    std::size_t ny, nu;
    QsrSpec operator()(const L2Gain& p) const {
      detail::require(p.gamma > 0.0 && std::isfinite(p.gamma), "qsr_preset: l2 gain requires gamma > 0");
      return {DenseMatrix::identity(ny, -1.0 / p.gamma), DenseMatrix(ny, nu), DenseMatrix::identity(nu, p.gamma)};
    }
    QsrSpec operator()(const Passivity&) const {
      return {DenseMatrix(ny, ny), DenseMatrix::eye(ny, nu, 0.5), DenseMatrix(nu, nu)};
    }
    QsrSpec operator()(const StrictPassivity& p) const {
      detail::require(p.eps > 0.0 && p.delta > 0.0, "qsr_preset: strict passivity requires eps > 0 and delta > 0");
      return strict_passivity_qsr(p.eps, p.delta, ny, nu);
    }
    QsrSpec operator()(const Conicity& p) const {
      detail::require(p.r > 0.0 && std::isfinite(p.r), "qsr_preset: conicity requires r > 0");
      return {DenseMatrix::identity(ny, -1.0), DenseMatrix::eye(ny, nu, p.c),
              DenseMatrix::identity(nu, p.r * p.r - p.c * p.c)};
    }
    QsrSpec operator()(const Sector& p) const {
      return {DenseMatrix::identity(ny, -1.0), DenseMatrix::eye(ny, nu, p.a + p.b),
              DenseMatrix::identity(nu, -p.a * p.b)};
    }
  };
  return std::visit(Builder{ny, nu}, preset);
}

inline double supply_rate(std::span<const double> dy, std::span<const double> du, const QsrSpec& qsr) {
  detail::require(dy.size() == qsr.ny() && du.size() == qsr.nu(), "supply_rate: increment lengths do not match Q/R");
  const Vector sdu = mat::matvec(qsr.s, du);
  return mat::quadratic_form(qsr.q, dy) + 2.0 * mat::dot(dy, sdu) + mat::quadratic_form(qsr.r, du);
}

}  // namespace dnd::cert
