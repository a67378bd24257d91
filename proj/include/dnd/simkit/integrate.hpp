#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "dnd/errors.hpp"
#include "dnd/matkit/dense_matrix.hpp"

namespace dnd::sim {

using mat::Vector;

// Uniformly sampled trajectory; sample k sits at t0 + k*dt.
struct Trajectory {
  double t0 = 0.0;
  double dt = 0.0;
  std::vector<Vector> samples;

  std::size_t size() const noexcept { return samples.size(); }
  std::size_t dim() const noexcept { return samples.empty() ? 0 : samples.front().size(); }
  double time(std::size_t k) const noexcept { return t0 + static_cast<double>(k) * dt; }
  const Vector& back() const { return samples.back(); }

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

// One classical Runge-Kutta step. `field(t, z)` returns dz/dt. Every fixed-step integrator in
// the library goes through this function so that model rollouts and training agree bitwise.
template <class Field>
Vector rk4_step(Field&& field, double t, std::span<const double> z, double dt) {
  const std::size_t n = z.size();
  const double half = 0.5 * dt;
  Vector stage(n);

  const Vector k1 = field(t, std::span<const double>(z));
  for (std::size_t i = 0; i < n; ++i) stage[i] = z[i] + half * k1[i];
  const Vector k2 = field(t + half, std::span<const double>(stage));
  for (std::size_t i = 0; i < n; ++i) stage[i] = z[i] + half * k2[i];
  const Vector k3 = field(t + half, std::span<const double>(stage));
  for (std::size_t i = 0; i < n; ++i) stage[i] = z[i] + dt * k3[i];
  const Vector k4 = field(t + dt, std::span<const double>(stage));

  const double sixth = dt / 6.0;
  Vector out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = z[i] + sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  return out;
}

// Number of dt-steps covering [t0, t1]; the span must be a positive multiple of dt within 1e-9.
inline std::size_t step_count(double t0, double t1, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw IntegrationError("step size must be positive", t0);
  const double span = t1 - t0;
  const double steps = std::round(span / dt);
  if (!(steps >= 1.0) || std::abs(steps * dt - span) > 1e-9)
    throw ContractViolation("integration span is not a positive multiple of dt");
  return static_cast<std::size_t>(steps);
}

// Fixed-step RK4 over `steps` steps; returns steps + 1 samples including both endpoints.
template <class Field>
Trajectory integrate_steps(Field&& field, Vector z0, double t0, std::size_t steps, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw IntegrationError("step size must be positive", t0);
  for (double v : z0)
    if (!std::isfinite(v)) throw IntegrationError("non-finite initial state", t0);

  Trajectory traj{t0, dt, {}};
  traj.samples.reserve(steps + 1);
  traj.samples.push_back(std::move(z0));
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = traj.time(k);
    Vector next = rk4_step(field, t, traj.samples.back(), dt);
    for (double v : next)
      if (!std::isfinite(v)) throw IntegrationError("state became non-finite", traj.time(k + 1));
    traj.samples.push_back(std::move(next));
  }
  return traj;
}

template <class Field>
Trajectory integrate_rk4(Field&& field, Vector z0, double t0, double t1, double dt) {
  const std::size_t steps = step_count(t0, t1, dt);
  return integrate_steps(std::forward<Field>(field), std::move(z0), t0, steps, dt);
}

}  // namespace dnd::sim
