#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "dnd/certkit/search.hpp"
#include "dnd/errors.hpp"
#include "dnd/matkit/sym_eig.hpp"
#include "dnd/neuralfield/mlp.hpp"
#include "dnd/simkit/trajectory_csv.hpp"

namespace dnd::perturb {

using cert::Certificate;
using cert::Multipliers;
using cert::PBlocks;
using cert::QsrFamily;
using mat::DenseMatrix;
using mat::Vector;

enum class SolverMode { eig_penalty, conservative_lmi };

inline std::string to_string(SolverMode m) { return m == SolverMode::eig_penalty ? "eig_penalty" : "conservative_lmi"; }

inline SolverMode solver_mode_from_string(const std::string& s) {
  if (s == "eig_penalty") return SolverMode::eig_penalty;
  if (s == "conservative_lmi") return SolverMode::conservative_lmi;
  throw ContractViolation("unknown solver mode '" + s + "'");
}

enum class PenaltyKind { min_eig, spectral };

inline std::string to_string(PenaltyKind k) { return k == PenaltyKind::min_eig ? "min_eig" : "spectral"; }

inline PenaltyKind penalty_kind_from_string(const std::string& s) {
  if (s == "min_eig") return PenaltyKind::min_eig;
  if (s == "spectral") return PenaltyKind::spectral;
  throw ContractViolation("unknown penalty kind '" + s + "'");
}

struct SolverConfig {
  SolverMode mode = SolverMode::eig_penalty;
  PenaltyKind penalty = PenaltyKind::spectral;
  double rho_initial = 10.0;
  double rho_growth = 10.0;
  std::size_t max_rounds = 8;
  double step_initial = 1e-2;
  double backtrack = 0.5;
  std::size_t max_iterations = 200;  // per round
  double psd_tol = 1e-9;
  double margin = 1e-4;  // the penalty aims at min_eig >= margin
  double stagnation_tol = 1e-9;
  std::uint64_t seed = 0;
  cert::SearchConfig search;

  void validate() const {
    detail::require(rho_initial > 0.0, "SolverConfig: rho_initial must be positive");
    detail::require(rho_growth > 1.0, "SolverConfig: rho_growth must exceed 1");
    detail::require(max_rounds >= 1 && max_iterations >= 1, "SolverConfig: rounds and iterations must be positive");
    detail::require(step_initial > 0.0, "SolverConfig: step_initial must be positive");
    detail::require(backtrack > 0.0 && backtrack < 1.0, "SolverConfig: backtrack must lie in (0, 1)");
    detail::require(psd_tol >= 0.0 && margin >= 0.0 && stagnation_tol >= 0.0,
                    "SolverConfig: tolerances must be non-negative");
    search.validate();
  }
};

struct TraceRow {
  std::size_t iteration;
  double gap;
  double norm;
  double rho;
  double merit;
};

struct PerturbResult {
  nn::Mlp net;
  Certificate certificate;
  double perturbation_norm = 0.0;
  std::size_t iterations = 0;
  bool success = false;
  double best_min_eig = -std::numeric_limits<double>::infinity();
  std::string message;
  std::vector<TraceRow> trace;
};

// All weight entries, layer-major and row-major within a layer; biases excluded.
inline Vector flatten_weights(const nn::Mlp& net) {
  Vector out;
  for (const nn::Layer& l : net.layers()) {
    const auto d = l.weight.data();
    out.insert(out.end(), d.begin(), d.end());
  }
  return out;
}

inline nn::Mlp unflatten_weights(const nn::Mlp& net, std::span<const double> flat) {
  std::size_t total = 0;
  for (const nn::Layer& l : net.layers()) total += l.weight.size();
  detail::require(flat.size() == total, "unflatten_weights: expected " + std::to_string(total) + " entries");
  nn::Mlp out = net;
  std::size_t k = 0;
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    DenseMatrix w = net.layer(i).weight;
    for (double& v : w.data()) v = flat[k++];
    out.set_weight(i, std::move(w));
  }
  return out;
}

inline double perturbation_norm(const nn::Mlp& a, const nn::Mlp& b) {
  const Vector fa = flatten_weights(a), fb = flatten_weights(b);
  detail::require(fa.size() == fb.size(), "perturbation_norm: networks differ in shape");
  double s = 0.0;
  for (std::size_t i = 0; i < fa.size(); ++i) s += (fa[i] - fb[i]) * (fa[i] - fb[i]);
  return std::sqrt(s);
}

// The QSR the solver targets. In family mode this is eps = delta = 0, the admissible
// member with the largest min_eig(M_L).
inline cert::QsrSpec target_qsr(const QsrFamily& family, std::size_t n0) {
  if (const auto* fixed = std::get_if<cert::QsrSpec>(&family)) return *fixed;
  return cert::family_qsr(std::get<cert::StrictPassivityFamily>(family), 0.0, 0.0, n0);
}

inline double feasibility_gap(const DenseMatrix& ml) { return std::max(0.0, -mat::min_eig(ml)); }

inline double feasibility_gap(const nn::Mlp& net, const QsrFamily& family, const DenseMatrix& p22,
                              const Multipliers& mult) {
  return feasibility_gap(cert::build_ml(net, PBlocks::from_qsr(target_qsr(family, net.input_dim()), p22), mult));
}

// M_L without the lambda_i p_i W_iᵀW_i terms. Since those terms are PSD whenever p_i >= 0,
// this matrix being PSD implies M_L is.
inline DenseMatrix build_ml_conservative(const nn::Mlp& net, const PBlocks& pb, const Multipliers& mult) {
  DenseMatrix ml = cert::build_ml(net, pb, mult);
  const auto dims = net.dims();
  std::size_t off = 0;
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    const nn::Layer& l = net.layer(i);
    const double p = cert::slope_constants(l.activation).p;
    detail::require(p >= 0.0, "conservative_lmi: every layer needs p >= 0");
    const DenseMatrix g = mat::gram(l.weight);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) ml(off + r, off + c) -= mult.lambda * (mult.lambdas[i] * p * g(r, c));
    off += dims[i];
  }
  return ml;
}

namespace internal {

// d tr(G M_L) / d W_i = 2 lambda_i p_i W_i G_{i-1,i-1} - 2 lambda_i m_i G_{i,i-1} for symmetric G.
inline std::vector<DenseMatrix> trace_weight_gradient(const nn::Mlp& net, const Multipliers& mult,
                                                      const DenseMatrix& g, bool drop_quadratic) {
  const auto dims = net.dims();
  std::vector<DenseMatrix> out;
  std::size_t off_prev = 0;
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    const nn::Layer& l = net.layer(i);
    const auto [p, m] = cert::slope_constants(l.activation);
    const double li = mult.lambda * mult.lambdas[i];
    const std::size_t off = off_prev + dims[i];
    const DenseMatrix g_prev = mat::block(g, off_prev, off_prev, dims[i], dims[i]);
    const DenseMatrix g_off = mat::block(g, off, off_prev, dims[i + 1], dims[i]);
    DenseMatrix d = g_off * (-2.0 * li * m);
    if (!drop_quadratic) d += (l.weight * g_prev) * (2.0 * li * p);
    out.push_back(std::move(d));
    off_prev = off;
  }
  return out;
}

// sum_k c_k v_k v_kᵀ over the first `count` eigenpairs.
inline DenseMatrix weighted_projector(const mat::SymEigResult& eig, std::span<const double> c) {
  const std::size_t n = eig.values.size();
  DenseMatrix g(n, n);
  for (std::size_t k = 0; k < c.size(); ++k) {
    if (c[k] == 0.0) continue;
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t s = 0; s < n; ++s) g(r, s) += c[k] * eig.vectors(r, k) * eig.vectors(s, k);
  }
  return g;
}

}  // namespace internal

struct MinEigGradient {
  double min_eig;
  std::vector<DenseMatrix> weights;  // d min_eig / d W_i
};

// Subgradient of min_eig(M_L) with respect to every W_i. When the minimum is repeated, the
// outer products of all eigenvectors within 1e-10 of it are averaged.
inline MinEigGradient min_eig_gradient(const nn::Mlp& net, const PBlocks& pb, const Multipliers& mult,
                                       bool drop_quadratic = false) {
  const DenseMatrix ml = drop_quadratic ? build_ml_conservative(net, pb, mult) : cert::build_ml(net, pb, mult);
  const mat::SymEigResult eig = mat::sym_eig(ml);
  const double lo = eig.values.front();
  std::size_t k = 0;
  while (k < eig.values.size() && eig.values[k] <= lo + 1e-10) ++k;
  const Vector c(k, 1.0 / static_cast<double>(k));
  return {lo, internal::trace_weight_gradient(net, mult, internal::weighted_projector(eig, c), drop_quadratic)};
}

// Constraint penalty of the merit function.
//   min_eig:  max(0, margin - lambda_min)^2
//   spectral: sum_k max(0, margin - lambda_k)^2
// They coincide whenever at most one eigenvalue lies below the margin.
inline double penalty_value(std::span<const double> eigenvalues, double margin, PenaltyKind kind) {
  double total = 0.0;
  for (double v : eigenvalues) {
    const double s = std::max(0.0, margin - v);
    total += s * s;
    if (kind == PenaltyKind::min_eig) break;
  }
  return total;
}

struct PenaltyGradient {
  double min_eig;
  double penalty;
  std::vector<DenseMatrix> weights;  // d penalty / d W_i
};

inline PenaltyGradient penalty_gradient(const nn::Mlp& net, const PBlocks& pb, const Multipliers& mult, double margin,
                                        PenaltyKind kind) {
  if (kind == PenaltyKind::min_eig) {
    MinEigGradient g = min_eig_gradient(net, pb, mult);
    const double s = std::max(0.0, margin - g.min_eig);
    for (DenseMatrix& d : g.weights) d *= -2.0 * s;
    return {g.min_eig, s * s, std::move(g.weights)};
  }
  const mat::SymEigResult eig = mat::sym_eig(cert::build_ml(net, pb, mult));
  Vector c(eig.values.size(), 0.0);
  for (std::size_t k = 0; k < c.size(); ++k) c[k] = -2.0 * std::max(0.0, margin - eig.values[k]);
  return {eig.values.front(), penalty_value(eig.values, margin, kind),
          internal::trace_weight_gradient(net, mult, internal::weighted_projector(eig, c), false)};
}

inline void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& trace) {
  os << "iteration,gap,norm,rho,merit\n";
  for (const TraceRow& r : trace)
    os << r.iteration << ',' << sim::format_double(r.gap) << ',' << sim::format_double(r.norm) << ','
       << sim::format_double(r.rho) << ',' << sim::format_double(r.merit) << '\n';
}

inline void write_trace_csv(const std::filesystem::path& path, const std::vector<TraceRow>& trace) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  write_trace_csv(os, trace);
}

namespace internal {

inline double sq_distance(const nn::Mlp& a, const nn::Mlp& b) {
  const double d = perturbation_norm(a, b);
  return d * d;
}

inline std::pair<Multipliers, double> conservative_multipliers(const nn::Mlp& net, const PBlocks& pb,
                                                               const Multipliers& warm,
                                                               const cert::SearchConfig& cfg) {
  auto [lams, val] = cert::internal::coordinate_search(
      [&](const std::vector<double>& l) {
        return mat::min_eig(build_ml_conservative(net, pb, Multipliers{1.0, l}));
      },
      warm.lambdas, cfg);
  return {Multipliers{1.0, lams}, val};
}

// Smallest tau in (0, 1] such that baseline + tau (candidate - baseline) is feasible after a
// multiplier search; returns the candidate itself when no shorter point is found.
inline std::pair<nn::Mlp, Multipliers> shorten(const nn::Mlp& baseline, const nn::Mlp& candidate,
                                               const Multipliers& mult, const cert::QsrSpec& qsr,
                                               const DenseMatrix& p22, const SolverConfig& cfg) {
  const Vector w0 = flatten_weights(baseline), w1 = flatten_weights(candidate);
  const auto at = [&](double tau) {
    Vector w(w0.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = w0[i] + tau * (w1[i] - w0[i]);
    return unflatten_weights(baseline, w);
  };
  nn::Mlp best = candidate;
  Multipliers best_mult = mult;
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 30; ++it) {
    const double mid = 0.5 * (lo + hi);
    const nn::Mlp trial = at(mid);
    auto [m, val] = cert::best_multipliers(trial, qsr, p22, cfg.search, &best_mult);
    if (val >= cfg.margin * 0.5) {
      hi = mid;
      best = trial;
      best_mult = m;
    } else {
      lo = mid;
    }
  }
  return {best, best_mult};
}

}  // namespace internal

// Moves the weights of `baseline` as little as the solver manages onto the set where M_L is
// PSD. Biases are carried over untouched. A failed solve returns success = false with the best
// minimum eigenvalue reached; it never reports a certificate it did not verify.
inline PerturbResult perturb(const nn::Mlp& baseline, const QsrFamily& family, const DenseMatrix& p22,
                             const SolverConfig& cfg = {}) {
  cfg.validate();
  cert::internal::check_p22(p22, baseline.output_dim());
  const std::size_t n0 = baseline.input_dim();
  const cert::QsrSpec qsr = target_qsr(family, n0);
  const PBlocks pb = PBlocks::from_qsr(qsr, p22);
  const bool conservative = cfg.mode == SolverMode::conservative_lmi;

  PerturbResult res;
  res.net = baseline;

  Multipliers mult;
  if (cert::is_family(family)) {
    mult = cert::relaxed_indices(baseline, p22, cfg.search, std::get<cert::StrictPassivityFamily>(family)).multipliers;
  } else {
    mult = cert::best_multipliers(baseline, qsr, p22, cfg.search).first;
  }
  {
    auto [m, val] = cert::best_multipliers(baseline, qsr, p22, cfg.search, &mult);
    res.best_min_eig = val;
    if (val >= -cfg.psd_tol) {
      res.certificate = cert::verify(baseline, family, p22, cfg.search, &m);
      res.success = res.certificate.feasible;
      res.message = res.success ? "baseline already feasible" : "baseline feasible at eps = delta = 0 only";
      if (res.success) return res;
    }
    if (!conservative) mult = m;
  }

  nn::Mlp w = baseline;
  bool have_feasible = false;
  nn::Mlp best_net = baseline;
  Multipliers best_mult = mult;
  double best_norm = std::numeric_limits<double>::infinity();
  std::size_t iter = 0;
  double rho = cfg.rho_initial;
  double prev_round_gap = std::numeric_limits<double>::infinity();

  const auto record_if_feasible = [&](const nn::Mlp& net, const Multipliers& m, double me) {
    res.best_min_eig = std::max(res.best_min_eig, me);
    if (me < cfg.margin * 0.5) return;
    const double nrm = perturbation_norm(net, baseline);
    if (nrm < best_norm) {
      best_norm = nrm;
      best_net = net;
      best_mult = m;
      have_feasible = true;
    }
  };

  if (conservative) {
    mult = internal::conservative_multipliers(baseline, pb, mult, cfg.search).first;
    for (std::size_t round = 0; round < cfg.max_rounds && !have_feasible; ++round) {
      for (std::size_t it = 0; it < cfg.max_iterations; ++it, ++iter) {
        DenseMatrix n = build_ml_conservative(w, pb, mult);
        const mat::SymEigResult eig = mat::sym_eig(n);
        const double me = eig.values.front();
        res.trace.push_back({iter, std::max(0.0, -me), perturbation_norm(w, baseline), rho, 0.0});
        if (me >= cfg.margin) {
          record_if_feasible(w, mult, mat::min_eig(cert::build_ml(w, pb, mult)));
          break;
        }
        // PSD projection by eigenvalue clipping, then back onto the affine image of the weights.
        const std::size_t dim = n.rows();
        DenseMatrix y(dim, dim);
        for (std::size_t c = 0; c < dim; ++c) {
          const double lam = std::max(eig.values[c], cfg.margin * 2.0);
          for (std::size_t r = 0; r < dim; ++r)
            for (std::size_t s = 0; s < dim; ++s) y(r, s) += lam * eig.vectors(r, c) * eig.vectors(s, c);
        }
        const auto dims = w.dims();
        std::size_t off_prev = 0;
        for (std::size_t i = 0; i < w.num_layers(); ++i) {
          const std::size_t off = off_prev + dims[i];
          const double coef = mult.lambdas[i] * cert::slope_constants(w.layer(i).activation).m;
          detail::require(coef > 0.0, "conservative_lmi: need lambda_i m_i > 0");
          DenseMatrix wi(dims[i + 1], dims[i]);
          for (std::size_t r = 0; r < dims[i + 1]; ++r)
            for (std::size_t c = 0; c < dims[i]; ++c)
              wi(r, c) = -(y(off + r, off_prev + c) + y(off_prev + c, off + r)) / (2.0 * coef);
          w.set_weight(i, std::move(wi));
          off_prev = off;
        }
      }
      if (!have_feasible) mult = internal::conservative_multipliers(w, pb, mult, cfg.search).first;
    }
  } else {
    for (std::size_t round = 0; round < cfg.max_rounds; ++round, rho *= cfg.rho_growth) {
      double step = cfg.step_initial;
      double round_gap = std::numeric_limits<double>::infinity();
      for (std::size_t it = 0; it < cfg.max_iterations; ++it, ++iter) {
        const PenaltyGradient g = penalty_gradient(w, pb, mult, cfg.margin, cfg.penalty);
        const double dist2 = internal::sq_distance(w, baseline);
        const double merit = dist2 + rho * g.penalty;
        round_gap = std::min(round_gap, std::max(0.0, -g.min_eig));
        res.trace.push_back({iter, std::max(0.0, -g.min_eig), std::sqrt(dist2), rho, merit});
        record_if_feasible(w, mult, g.min_eig);

        std::vector<DenseMatrix> grad;
        double gnorm2 = 0.0;
        for (std::size_t i = 0; i < w.num_layers(); ++i) {
          DenseMatrix d = (w.layer(i).weight - baseline.layer(i).weight) * 2.0;
          d += g.weights[i] * rho;
          for (double v : d.data()) gnorm2 += v * v;
          grad.push_back(std::move(d));
        }
        if (gnorm2 == 0.0) break;

        bool accepted = false;
        for (int bt = 0; bt < 40; ++bt) {
          nn::Mlp trial = w;
          for (std::size_t i = 0; i < w.num_layers(); ++i) trial.set_weight(i, w.layer(i).weight - grad[i] * step);
          const Vector ev = mat::eigvals(cert::build_ml(trial, pb, mult));
          const double m2 = internal::sq_distance(trial, baseline) + rho * penalty_value(ev, cfg.margin, cfg.penalty);
          if (m2 <= merit - 1e-4 * step * gnorm2) {
            w = std::move(trial);
            accepted = true;
            step *= 2.0;
            break;
          }
          step *= cfg.backtrack;
        }
        if (!accepted) break;
      }
      auto [m, val] = cert::best_multipliers(w, qsr, p22, cfg.search, &mult);
      mult = m;
      record_if_feasible(w, mult, val);
      if (have_feasible) break;
      round_gap = std::min(round_gap, std::max(0.0, -val));
      if (prev_round_gap - round_gap < cfg.stagnation_tol) {
        res.message = "stagnated: gap improved by less than the stagnation tolerance over a full round";
        break;
      }
      prev_round_gap = round_gap;
    }
  }
  res.iterations = iter;

  if (!have_feasible) {
    res.net = w;
    res.perturbation_norm = perturbation_norm(w, baseline);
    res.certificate = cert::verify(w, family, p22, cfg.search, &mult);
    res.success = false;
    if (res.message.empty()) res.message = "no feasible weights within the iteration budget";
    return res;
  }

  auto [net, m] = internal::shorten(baseline, best_net, best_mult, qsr, p22, cfg);
  res.net = net;
  res.perturbation_norm = perturbation_norm(net, baseline);
  res.certificate = cert::verify(net, family, p22, cfg.search, &m);
  res.best_min_eig = std::max(res.best_min_eig, res.certificate.min_eig_ml);
  res.success = res.certificate.feasible;
  res.message = res.success ? "feasible" : "final verification failed";
  return res;
}

}  // namespace dnd::perturb
