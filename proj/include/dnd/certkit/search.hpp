#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <utility>
#include <variant>
#include <vector>

#include "dnd/certkit/assembly.hpp"
#include "dnd/errors.hpp"
#include "dnd/matkit/sym_eig.hpp"
#include "dnd/neuralfield/training.hpp"
#include "dnd/simkit/dataset.hpp"

namespace dnd::cert {

struct SearchConfig {
  double psd_tol = 1e-9;
  double lambda_min = 1e-2;
  double lambda_max = 1e3;
  std::size_t grid_points = 11;
  std::size_t golden_iterations = 30;
  std::size_t sweeps = 2;
  double index_max = 100.0;  // bisection bracket for the strict-passivity indices
  std::size_t bisection_iterations = 45;

  void validate() const {
    detail::require(psd_tol >= 0.0, "SearchConfig: psd_tol must be non-negative");
    detail::require(lambda_min > 0.0 && lambda_max > lambda_min, "SearchConfig: need 0 < lambda_min < lambda_max");
    detail::require(grid_points >= 3, "SearchConfig: grid needs at least 3 points");
    detail::require(index_max > 0.0, "SearchConfig: index_max must be positive");
  }
};

// Q = -eps I, S = s_scale I, R = -delta I with eps, delta as decision variables.
// ny = 0 splits the network input evenly.
struct StrictPassivityFamily {
  double s_scale = 0.5;
  std::size_t ny = 0;
};

using QsrFamily = std::variant<QsrSpec, StrictPassivityFamily>;

inline bool is_family(const QsrFamily& f) { return std::holds_alternative<StrictPassivityFamily>(f); }

inline std::pair<std::size_t, std::size_t> family_split(const StrictPassivityFamily& f, std::size_t n0) {
  const std::size_t ny = f.ny == 0 ? n0 / 2 : f.ny;
  detail::require(ny > 0 && ny < n0, "strict-passivity family: ny must lie strictly between 0 and n0");
  return {ny, n0 - ny};
}

inline QsrSpec family_qsr(const StrictPassivityFamily& f, double eps, double delta, std::size_t n0) {
  const auto [ny, nu] = family_split(f, n0);
  return strict_passivity_qsr(eps, delta, ny, nu, f.s_scale);
}

struct Certificate {
  bool feasible = false;
  bool strict_passivity_family = false;
  QsrSpec qsr;
  DenseMatrix p22;
  Multipliers multipliers;
  double eps = 0.0;
  double delta = 0.0;
  double min_eig_ml = -std::numeric_limits<double>::infinity();
  double psd_tol = 1e-9;
};

inline DenseMatrix certificate_matrix(const nn::Mlp& net, const Certificate& c) {
  return build_ml(net, PBlocks::from_qsr(c.qsr, c.p22), c.multipliers);
}

namespace internal {

inline void check_p22(const DenseMatrix& p22, std::size_t nl) {
  detail::require(p22.rows() == nl && p22.cols() == nl, "p22 must be nl x nl");
  detail::require(p22.is_symmetric(1e-12), "p22 must be symmetric");
  detail::require(mat::min_eig(p22 * -1.0) > 0.0, "p22 must be negative definite");
}

// M_L = P_L + sum_i lambda_i S_i, with the unit-multiplier slope matrices cached per layer.
class MlAffine {
 public:
  MlAffine(const nn::Mlp& net, const DenseMatrix& p22) : dims_(net.dims()) {
    const std::size_t l = net.num_layers();
    for (std::size_t i = 0; i < l; ++i) {
      Multipliers unit{1.0, std::vector<double>(l, 0.0)};
      unit.lambdas[i] = 1.0;
      slope_.push_back(build_st(net, unit));
    }
    p22_ = p22;
  }

  std::size_t layers() const noexcept { return slope_.size(); }

  DenseMatrix matrix(const QsrSpec& qsr, std::span<const double> lambdas) const {
    DenseMatrix m = build_pl(PBlocks::from_qsr(qsr, p22_), dims_);
    for (std::size_t i = 0; i < slope_.size(); ++i) {
      const auto src = slope_[i].data();
      auto dst = m.data();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += lambdas[i] * src[k];
    }
    return m;
  }

  double min_eig(const QsrSpec& qsr, std::span<const double> lambdas) const {
    return mat::min_eig(mat::symmetrized(matrix(qsr, lambdas)));
  }

 private:
  std::vector<std::size_t> dims_;
  std::vector<DenseMatrix> slope_;
  DenseMatrix p22_;
};

// Maximizes f over lambdas in [lambda_min, lambda_max]^l, one axis at a time: a log-spaced grid
// on the axis, then golden-section in log scale between the grid neighbours of the best point.
template <class F>
std::pair<std::vector<double>, double> coordinate_search(F&& f, std::vector<double> start, const SearchConfig& cfg) {
  const double lo = std::log(cfg.lambda_min), hi = std::log(cfg.lambda_max);
  const std::size_t n = cfg.grid_points;
  std::vector<double> grid(n);
  for (std::size_t k = 0; k < n; ++k) grid[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(n - 1);

  for (double& s : start) s = std::clamp(s, cfg.lambda_min, cfg.lambda_max);
  std::vector<double> best = start;
  double best_val = f(best);

  for (std::size_t sweep = 0; sweep < cfg.sweeps; ++sweep) {
    bool improved = false;
    for (std::size_t axis = 0; axis < best.size(); ++axis) {
      std::vector<double> trial = best;
      auto eval = [&](double log_l) {
        trial[axis] = std::exp(log_l);
        return f(trial);
      };
      std::size_t arg = 0;
      double arg_val = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < n; ++k) {
        const double v = eval(grid[k]);
        if (v > arg_val) {
          arg_val = v;
          arg = k;
        }
      }
      double a = grid[arg == 0 ? 0 : arg - 1], b = grid[std::min(arg + 1, n - 1)];
      const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
      double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
      double f1 = eval(x1), f2 = eval(x2);
      double cand = grid[arg], cand_val = arg_val;
      for (std::size_t it = 0; it < cfg.golden_iterations; ++it) {
        if (f1 >= f2) {
          b = x2;
          x2 = x1;
          f2 = f1;
          x1 = b - phi * (b - a);
          f1 = eval(x1);
        } else {
          a = x1;
          x1 = x2;
          f1 = f2;
          x2 = a + phi * (b - a);
          f2 = eval(x2);
        }
        if (f1 > cand_val) cand = x1, cand_val = f1;
        if (f2 > cand_val) cand = x2, cand_val = f2;
      }
      if (cand_val > best_val) {
        best[axis] = std::exp(cand);
        best_val = cand_val;
        improved = true;
      }
    }
    if (!improved) break;
  }
  return {best, best_val};
}

// Smallest s in [lo, hi] with pred(s) true, assuming pred is monotone in s. Returns hi when
// even hi fails (the caller checks).
template <class Pred>
double bisect_smallest(Pred&& pred, double lo, double hi, std::size_t iterations) {
  if (pred(lo)) return lo;
  for (std::size_t it = 0; it < iterations; ++it) {
    const double mid = 0.5 * (lo + hi);
    (pred(mid) ? hi : lo) = mid;
  }
  return hi;
}

}  // namespace internal

// Best multipliers for a fixed QSR: maximizes min_eig(M_L) by coordinate search.
inline std::pair<Multipliers, double> best_multipliers(const nn::Mlp& net, const QsrSpec& qsr, const DenseMatrix& p22,
                                                       const SearchConfig& cfg, const Multipliers* warm = nullptr) {
  const internal::MlAffine aff(net, p22);
  std::vector<double> start = warm ? warm->lambdas : std::vector<double>(net.num_layers(), 1.0);
  auto [lams, val] = internal::coordinate_search([&](const std::vector<double>& l) { return aff.min_eig(qsr, l); },
                                                 start, cfg);
  return {Multipliers{1.0, lams}, val};
}

// Certificate search. For the strict-passivity family eps = delta = 0 maximizes min_eig
// among admissible indices (raising either only subtracts a PSD term), so the multipliers are
// searched there; when feasible, the indices are then pushed up to the largest common value
// that keeps M_L PSD.
inline Certificate verify(const nn::Mlp& net, const QsrFamily& family, const DenseMatrix& p22,
                          const SearchConfig& cfg = {}, const Multipliers* warm = nullptr) {
  cfg.validate();
  internal::check_p22(p22, net.output_dim());
  const std::size_t n0 = net.input_dim();

  Certificate cert;
  cert.p22 = p22;
  cert.psd_tol = cfg.psd_tol;
  cert.strict_passivity_family = is_family(family);
  if (const auto* fixed = std::get_if<QsrSpec>(&family)) {
    fixed->validate();
    detail::require(fixed->ny() + fixed->nu() == n0, "verify: QSR dimensions must add up to the network input width");
    cert.qsr = *fixed;
  } else {
    cert.qsr = family_qsr(std::get<StrictPassivityFamily>(family), 0.0, 0.0, n0);
  }

  auto [mult, val] = best_multipliers(net, cert.qsr, p22, cfg, warm);
  cert.multipliers = mult;
  (void)val;

  if (const auto* fam = std::get_if<StrictPassivityFamily>(&family)) {
    const internal::MlAffine aff(net, p22);
    const auto ok = [&](double t) {
      return aff.min_eig(family_qsr(*fam, t, t, n0), mult.lambdas) >= -cfg.psd_tol;
    };
    if (ok(0.0)) {
      const double u = internal::bisect_smallest([&](double v) { return ok(cfg.index_max - v); }, 0.0, cfg.index_max,
                                                 cfg.bisection_iterations);
      const double t = cfg.index_max - u;
      cert.eps = cert.delta = t;
      cert.qsr = family_qsr(*fam, t, t, n0);
    }
  }
  cert.min_eig_ml = mat::min_eig(certificate_matrix(net, cert));
  cert.feasible = cert.min_eig_ml >= -cfg.psd_tol && cert.eps >= 0.0 && cert.delta >= 0.0;
  return cert;
}

// Penalty on negative indices; zero exactly when both are non-negative.
inline double relaxation_objective(double eps, double delta) {
  return std::max(-eps, 0.0) + std::max(-delta, 0.0);
}

struct RelaxedIndices {
  bool feasible = false;  // M_L within psd_tol at the returned indices
  double eps = 0.0;
  double delta = 0.0;
  double objective = 0.0;
  double min_eig_ml = -std::numeric_limits<double>::infinity();
  Multipliers multipliers;
};

// Sign-unconstrained strict-passivity indices minimizing relaxation_objective subject to
// min_eig(M_L) >= -psd_tol.
inline RelaxedIndices relaxed_indices(const nn::Mlp& net, const DenseMatrix& p22, const SearchConfig& cfg = {},
                                      const StrictPassivityFamily& family = {}) {
  const Certificate direct = verify(net, family, p22, cfg);
  if (direct.feasible)
    return {true, direct.eps, direct.delta, 0.0, direct.min_eig_ml, direct.multipliers};

  const std::size_t n0 = net.input_dim();
  const internal::MlAffine aff(net, p22);
  // (eps, delta) = -s * (2 theta, 2 (1 - theta)): the objective is 2 s for every theta.
  const auto qsr_at = [&](double s, double theta) {
    return family_qsr(family, -2.0 * theta * s, -2.0 * (1.0 - theta) * s, n0);
  };
  const auto min_shift = [&](double theta, const std::vector<double>& lams) {
    return internal::bisect_smallest([&](double s) { return aff.min_eig(qsr_at(s, theta), lams) >= -cfg.psd_tol; },
                                     0.0, cfg.index_max, cfg.bisection_iterations);
  };

  double theta = 0.5;
  auto [lams, neg_s] = internal::coordinate_search(
      [&](const std::vector<double>& l) { return -min_shift(theta, l); }, direct.multipliers.lambdas, cfg);

  // Golden-section over the direction at fixed multipliers.
  {
    const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
    double a = 0.01, b = 0.99;
    double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
    double f1 = min_shift(x1, lams), f2 = min_shift(x2, lams);
    double best_theta = theta, best_s = -neg_s;
    for (std::size_t it = 0; it < cfg.golden_iterations; ++it) {
      if (f1 <= f2) {
        b = x2, x2 = x1, f2 = f1, x1 = b - phi * (b - a), f1 = min_shift(x1, lams);
      } else {
        a = x1, x1 = x2, f1 = f2, x2 = a + phi * (b - a), f2 = min_shift(x2, lams);
      }
      if (f1 < best_s) best_theta = x1, best_s = f1;
      if (f2 < best_s) best_theta = x2, best_s = f2;
    }
    theta = best_theta;
  }
  if (theta != 0.5) {
    Multipliers warm{1.0, lams};
    auto [lams2, neg_s2] = internal::coordinate_search(
        [&](const std::vector<double>& l) { return -min_shift(theta, l); }, warm.lambdas, cfg);
    lams = lams2;
    neg_s = neg_s2;
  }

  const double s = min_shift(theta, lams);
  RelaxedIndices out;
  out.eps = -2.0 * theta * s;
  out.delta = -2.0 * (1.0 - theta) * s;
  out.objective = relaxation_objective(out.eps, out.delta);
  out.multipliers = Multipliers{1.0, lams};
  out.min_eig_ml = mat::min_eig(build_ml(net, PBlocks::from_qsr(qsr_at(s, theta), p22), out.multipliers));
  out.feasible = out.min_eig_ml >= -cfg.psd_tol;
  return out;
}

// F0 - lam F1 >= -tol, the matrix condition under which zᵀF1z >= 0 implies zᵀF0z >= 0.
inline bool s_procedure_holds(const DenseMatrix& f0, const DenseMatrix& f1, double lam, double psd_tol = 1e-9) {
  detail::require(f0.square() && f0.rows() == f1.rows() && f0.cols() == f1.cols(),
                  "s_procedure_holds: F0 and F1 must be square with equal dimensions");
  detail::require(lam >= 0.0, "s_procedure_holds: lambda must be non-negative");
  DenseMatrix d = f1 * -lam;
  d += f0;
  return mat::is_psd(d, psd_tol);
}

using TrajectoryPair = std::pair<sim::Trajectory, sim::Trajectory>;

// Minimum supply rate over all samples of all pairs. State samples are split as y = z[0, ny),
// u = z[ny, ny + nu).
inline double empirical_dissipativity(std::span<const TrajectoryPair> pairs, const QsrSpec& qsr) {
  qsr.validate();
  double lowest = std::numeric_limits<double>::infinity();
  Vector dy(qsr.ny()), du(qsr.nu());
  for (const auto& [a, b] : pairs) {
    detail::require(a.size() == b.size() && a.dt == b.dt, "empirical_dissipativity: pair must share dt and length");
    for (std::size_t k = 0; k < a.size(); ++k) {
      const Vector& za = a.samples[k];
      const Vector& zb = b.samples[k];
      detail::require(za.size() == qsr.ny() + qsr.nu() && zb.size() == za.size(),
                      "empirical_dissipativity: sample width does not match the QSR split");
      for (std::size_t i = 0; i < dy.size(); ++i) dy[i] = zb[i] - za[i];
      for (std::size_t i = 0; i < du.size(); ++i) du[i] = zb[qsr.ny() + i] - za[qsr.ny() + i];
      lowest = std::min(lowest, supply_rate(dy, du, qsr));
    }
  }
  return lowest;
}

// Pairs of model rollouts from independent initial states uniform in [-range, range]^n.
inline std::vector<TrajectoryPair> sample_model_trajectory_pairs(const nn::Mlp& net, std::size_t count,
                                                                 std::size_t samples, double dt, std::uint64_t seed,
                                                                 double range = 1.0) {
  detail::require(samples >= 2, "sample_model_trajectory_pairs: need at least 2 samples");
  auto rng = sim::seeded_engine(seed, 0x5a);
  std::uniform_real_distribution<double> dist(-range, range);
  std::vector<TrajectoryPair> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    Vector za(net.input_dim()), zb(net.input_dim());
    for (double& v : za) v = dist(rng);
    for (double& v : zb) v = dist(rng);
    out.emplace_back(nn::rollout(net, za, samples - 1, dt), nn::rollout(net, zb, samples - 1, dt));
  }
  return out;
}

}  // namespace dnd::cert
