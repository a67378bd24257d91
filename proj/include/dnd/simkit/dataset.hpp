#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dnd/errors.hpp"
#include "dnd/simkit/duffing.hpp"
#include "dnd/simkit/integrate.hpp"

namespace dnd::sim {

// Augmented state layout z = [x1, x2, u, pad].
inline constexpr std::size_t kStateDim = 2;
inline constexpr std::size_t kInputDim = 2;
inline constexpr std::size_t kAugmentedDim = kStateDim + kInputDim;

// A contiguous slice of one source trajectory.
struct Collection {
  std::size_t source = 0;
  std::size_t start = 0;
  std::vector<Vector> samples;

  friend bool operator==(const Collection&, const Collection&) = default;
};

struct Dataset {
  double dt = 0.0;
  std::vector<Collection> collections;

  std::size_t collection_length() const noexcept {
    return collections.empty() ? 0 : collections.front().samples.size();
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Field of the augmented system: Duffing dynamics, the input law on u, a frozen pad channel.
inline auto augmented_duffing_field(DuffingParams params, InputLaw law) {
  return [params, law](double t, std::span<const double> z) {
    const auto dx = duffing_field({z[0], z[1]}, z[2], params);
    return Vector{dx[0], dx[1], input_rate(law, t), 0.0};
  };
}

inline std::mt19937_64 seeded_engine(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

// Initial states drawn uniformly from [-range, range]^2.
inline std::vector<std::array<double, 2>> random_initial_states(std::size_t count, double range,
                                                                std::uint64_t seed) {
  auto rng = seeded_engine(seed, 0x1c);
  std::uniform_real_distribution<double> dist(-range, range);
  std::vector<std::array<double, 2>> out(count);
  for (auto& x : out) {
    x[0] = dist(rng);
    x[1] = dist(rng);
  }
  return out;
}

// Simulates one trajectory per (initial state, initial input) pair and adds sensor noise.
// `noise_variance` is a variance: samples get N(0, noise_variance) on x1, x2 and u; the pad
// channel and the timestamps stay exact. Each trajectory uses its own engine derived from
// (seed, index), so results do not depend on evaluation order.
inline std::vector<Trajectory> generate_trajectories(const DuffingParams& params,
                                                     const std::vector<std::array<double, 2>>& initial_states,
                                                     const std::vector<double>& u0_values, double t0, double t1,
                                                     double dt, double noise_variance, std::uint64_t seed,
                                                     InputLaw law = InputLaw::case_study) {
  detail::require(initial_states.size() == u0_values.size(),
                  "generate_trajectories: initial-state and input lists differ in length");
  detail::require(noise_variance >= 0.0 && std::isfinite(noise_variance),
                  "generate_trajectories: noise variance must be non-negative");

  const auto field = augmented_duffing_field(params, law);
  std::vector<Trajectory> out;
  out.reserve(initial_states.size());
  for (std::size_t i = 0; i < initial_states.size(); ++i) {
    Vector z0{initial_states[i][0], initial_states[i][1], u0_values[i], 0.0};
    Trajectory traj = integrate_rk4(field, std::move(z0), t0, t1, dt);
    if (noise_variance > 0.0) {
      auto rng = seeded_engine(seed, i);
      std::normal_distribution<double> noise(0.0, std::sqrt(noise_variance));
      for (Vector& z : traj.samples)
        for (std::size_t c = 0; c < kStateDim + 1; ++c) z[c] += noise(rng);
    }
    out.push_back(std::move(traj));
  }
  return out;
}

// m windows of `len` consecutive samples; each picks a source trajectory and a start index
// uniformly at random.
inline Dataset sample_collections(const std::vector<Trajectory>& trajectories, std::size_t m,
                                  std::size_t len, std::uint64_t seed) {
  detail::require(!trajectories.empty(), "sample_collections: no trajectories");
  detail::require(m >= 1, "sample_collections: need at least one collection");
  detail::require(len >= 1, "sample_collections: collection length must be positive");
  for (const auto& t : trajectories) {
    detail::require(t.size() >= len, "sample_collections: collection length " + std::to_string(len) +
                                         " exceeds trajectory length " + std::to_string(t.size()));
    detail::require(t.dt == trajectories.front().dt, "sample_collections: trajectories differ in dt");
  }

  auto rng = seeded_engine(seed, 0xc0);
  std::uniform_int_distribution<std::size_t> pick(0, trajectories.size() - 1);
  Dataset data{trajectories.front().dt, {}};
  data.collections.reserve(m);
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t src = pick(rng);
    std::uniform_int_distribution<std::size_t> offset(0, trajectories[src].size() - len);
    const std::size_t start = offset(rng);
    const auto first = trajectories[src].samples.begin() + static_cast<std::ptrdiff_t>(start);
    data.collections.push_back({src, start, std::vector<Vector>(first, first + static_cast<std::ptrdiff_t>(len))});
  }
  return data;
}

}  // namespace dnd::sim
