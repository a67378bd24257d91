#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "dnd/errors.hpp"
#include "dnd/matkit/dense_matrix.hpp"

namespace dnd::mat {

inline constexpr double kSymmetryTol = 1e-12;
inline constexpr std::size_t kMaxEigDim = 512;

struct SymEigResult {
  Vector values;        // ascending
  DenseMatrix vectors;  // column k pairs with values[k]
};

namespace internal {

inline void check_symmetric_input(const DenseMatrix& a, const char* who) {
  if (!a.all_finite()) throw DataError(std::string(who) + ": matrix has non-finite entries");
  dnd::detail::require(a.square(), std::string(who) + ": matrix is not square (" + a.shape() + ")");
  dnd::detail::require(a.rows() <= kMaxEigDim,
                       std::string(who) + ": dimension " + std::to_string(a.rows()) +
                           " exceeds " + std::to_string(kMaxEigDim));
  dnd::detail::require(a.is_symmetric(kSymmetryTol),
                       std::string(who) + ": matrix is not symmetric within 1e-12");
}

// Cyclic Jacobi on a symmetrized copy. Rotations are accumulated into `v` when given.
inline Vector jacobi(DenseMatrix a, DenseMatrix* v) {
  const std::size_t n = a.rows();
  if (v) *v = DenseMatrix::identity(n);

  const double scale = a.frobenius_norm();
  const double stop = (scale * 1e-15) * (scale * 1e-15);

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off <= stop || off == 0.0) break;

    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        for (std::size_t k = 0; k < n; ++k) {
          const double g = a(k, p), h = a(k, q);
          a(k, p) = c * g - s * h;
          a(k, q) = s * g + c * h;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double g = a(p, k), h = a(q, k);
          a(p, k) = c * g - s * h;
          a(q, k) = s * g + c * h;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        if (v) {
          for (std::size_t k = 0; k < n; ++k) {
            const double g = (*v)(k, p), h = (*v)(k, q);
            (*v)(k, p) = c * g - s * h;
            (*v)(k, q) = s * g + c * h;
          }
        }
      }
    }
  }

  Vector values(n);
  for (std::size_t i = 0; i < n; ++i) values[i] = a(i, i);
  return values;
}

}  // namespace internal

// Eigen-decomposition of a symmetric matrix. The input is symmetrized as (A + Aᵀ)/2 before
// the Jacobi sweeps, so asymmetry below the 1e-12 admission tolerance is averaged out.
inline SymEigResult sym_eig(const DenseMatrix& a) {
  internal::check_symmetric_input(a, "sym_eig");
  DenseMatrix v;
  Vector raw = internal::jacobi(symmetrized(a), &v);

  const std::size_t n = raw.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return raw[i] < raw[j]; });

  SymEigResult out{Vector(n), DenseMatrix(n, n)};
  for (std::size_t k = 0; k < n; ++k) {
    out.values[k] = raw[order[k]];
    for (std::size_t r = 0; r < n; ++r) out.vectors(r, k) = v(r, order[k]);
  }
  return out;
}

// Eigenvalues only, ascending.
inline Vector eigvals(const DenseMatrix& a) {
  internal::check_symmetric_input(a, "eigvals");
  Vector values = internal::jacobi(symmetrized(a), nullptr);
  std::sort(values.begin(), values.end());
  return values;
}

inline double min_eig(const DenseMatrix& a) {
  internal::check_symmetric_input(a, "min_eig");
  if (a.rows() == 0) return 0.0;
  Vector values = internal::jacobi(symmetrized(a), nullptr);
  return *std::min_element(values.begin(), values.end());
}

inline bool is_psd(const DenseMatrix& a, double tol) { return min_eig(a) >= -tol; }

}  // namespace dnd::mat
