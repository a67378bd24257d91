#pragma once

#include <span>

#include "dnd/errors.hpp"
#include "dnd/neuralfield/activation.hpp"

namespace dnd::cert {

struct SlopeConstants {
  double p;  // alpha * beta
  double m;  // (alpha + beta) / 2
};

inline SlopeConstants slope_constants(const nn::Activation& act) {
  const double a = act.alpha();
  const double b = act.beta();
  return {a * b, 0.5 * (a + b)};
}

// [dv; dphi]ᵀ [[pI, -mI], [-mI, I]] [dv; dphi] for dv = v_b - v_a, dphi = phi(v_b) - phi(v_a).
// Never positive for an activation slope-restricted in [alpha, beta].
inline double slope_quadratic(std::span<const double> v_a, std::span<const double> v_b, const nn::Activation& act) {
  detail::require(v_a.size() == v_b.size(), "slope_quadratic: length mismatch");
  const auto [p, m] = slope_constants(act);
  double total = 0.0;
  for (std::size_t i = 0; i < v_a.size(); ++i) {
    const double dv = v_b[i] - v_a[i];
    const double dphi = act.apply(v_b[i]) - act.apply(v_a[i]);
    total += p * dv * dv - 2.0 * m * dv * dphi + dphi * dphi;
  }
  return total;
}

}  // namespace dnd::cert
