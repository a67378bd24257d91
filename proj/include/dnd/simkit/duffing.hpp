#pragma once

#include <array>
#include <cmath>
#include <numbers>

#include "dnd/errors.hpp"

namespace dnd::sim {

struct DuffingParams {
  double a = 1.0;
  double b = 1.0;
  double c = 1.0;
};

// Damped Duffing oscillator with cubic stiffness, forced by u.
inline std::array<double, 2> duffing_field(const std::array<double, 2>& x, double u,
                                           const DuffingParams& p) {
  if (!std::isfinite(x[0]) || !std::isfinite(x[1]) || !std::isfinite(u) || !std::isfinite(p.a) ||
      !std::isfinite(p.b) || !std::isfinite(p.c))
    throw DataError("duffing_field: non-finite input");
  return {x[1], -p.a * x[1] - (p.b + p.c * x[0] * x[0]) * x[0] + u};
}

// Rate of the closed-loop test input; zero before t = 0.
inline double case_study_input_rate(double t) {
  if (!std::isfinite(t)) throw DataError("case_study_input_rate: non-finite time");
  if (t < 0.0) return 0.0;
  const double decay = std::exp(-0.2 * t);
  const double w = std::numbers::pi * t;
  return 0.6 * decay * std::cos(w) - 3.0 * std::numbers::pi * decay * std::sin(w);
}

enum class InputLaw { case_study, zero };

inline double input_rate(InputLaw law, double t) {
  return law == InputLaw::case_study ? case_study_input_rate(t) : 0.0;
}

}  // namespace dnd::sim
