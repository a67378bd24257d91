#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <sstream>

#include "support.hpp"

using namespace dnd;
using Catch::Approx;
using sim::Trajectory;
using sim::Vector;

namespace {

auto decay() {
  return [](double, std::span<const double> z) {
    Vector d(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) d[i] = -z[i];
    return d;
  };
}

}  // namespace

TEST_CASE("duffing_field values") {
  const sim::DuffingParams p;
  CHECK(sim::duffing_field({0.0, 0.0}, 0.0, p) == std::array<double, 2>{0.0, 0.0});
  CHECK(sim::duffing_field({1.0, 0.0}, 0.0, p) == std::array<double, 2>{0.0, -2.0});
  CHECK(sim::duffing_field({1.0, 1.0}, 2.0, p) == std::array<double, 2>{1.0, -1.0});
  CHECK_THROWS_AS(sim::duffing_field({NAN, 0.0}, 0.0, p), DataError);
}

TEST_CASE("case-study input rate") {
  CHECK(sim::case_study_input_rate(0.0) == Approx(0.6).margin(1e-15));
  CHECK(sim::case_study_input_rate(1.0) == Approx(-0.6 * std::exp(-0.2)).margin(1e-12));
  CHECK(sim::case_study_input_rate(1.0) == Approx(-0.49124).margin(1e-5));
  CHECK(sim::case_study_input_rate(-1.0) == 0.0);
  CHECK_THROWS_AS(sim::case_study_input_rate(INFINITY), DataError);
}

TEST_CASE("rk4 on closed-form fields") {
  const auto zero = [](double, std::span<const double> z) { return Vector(z.size(), 0.0); };
  const Trajectory c = sim::integrate_rk4(zero, {7.0}, 0.0, 1.0, 0.1);
  for (const auto& s : c.samples) CHECK(s[0] == 7.0);

  const Trajectory e = sim::integrate_rk4(decay(), {1.0}, 0.0, 1.0, 1e-3);
  CHECK(e.size() == 1001);
  CHECK(std::abs(e.back()[0] - std::exp(-1.0)) < 1e-9);

  const auto one = [](double, std::span<const double>) { return Vector{1.0}; };
  const Trajectory l = sim::integrate_rk4(one, {0.0}, 0.0, 2.0, 1e-2);
  CHECK(std::abs(l.back()[0] - 2.0) < 1e-12);
}

TEST_CASE("rk4 convergence order") {
  const auto err = [](double dt) {
    return std::abs(sim::integrate_rk4(decay(), {1.0}, 0.0, 1.0, dt).back()[0] - std::exp(-1.0));
  };
  const double ratio = err(0.02) / err(0.01);
  CHECK(ratio >= 12.0);
  CHECK(ratio <= 20.0);
}

TEST_CASE("rk4 errors") {
  CHECK_THROWS_AS(sim::integrate_rk4(decay(), {1.0}, 0.0, 1.0, 0.0), IntegrationError);
  CHECK_THROWS_AS(sim::integrate_rk4(decay(), {1.0}, 0.0, 1.0, 0.3), ContractViolation);
  const auto blow = [](double, std::span<const double> z) { return Vector{z[0] * z[0] * 1e300}; };
  try {
    sim::integrate_rk4(blow, {2.0}, 0.0, 1.0, 0.1);
    FAIL("expected divergence");
  } catch (const IntegrationError& e) {
    CHECK(e.time() > 0.0);
  }
}

TEST_CASE("noise-free trajectories match the integrator exactly") {
  const sim::DuffingParams p;
  const auto trajs = sim::generate_trajectories(p, {{0.3, -0.2}}, {0.1}, 0.0, 1.0, 1e-3, 0.0, 5);
  const auto direct = sim::integrate_rk4(sim::augmented_duffing_field(p, sim::InputLaw::case_study),
                                         Vector{0.3, -0.2, 0.1, 0.0}, 0.0, 1.0, 1e-3);
  CHECK(trajs.front() == direct);
  for (const auto& s : trajs.front().samples) REQUIRE(s[3] == 0.0);
}

TEST_CASE("trajectory generation is seeded and shaped") {
  const sim::DuffingParams p;
  const auto x0 = sim::random_initial_states(3, 1.0, 11);
  for (const auto& x : x0) {
    CHECK(std::abs(x[0]) <= 1.0);
    CHECK(std::abs(x[1]) <= 1.0);
  }
  const auto a = sim::generate_trajectories(p, x0, {0.0, 0.1, 0.2}, 0.0, 9.999, 1e-3, 0.01, 11);
  const auto b = sim::generate_trajectories(p, x0, {0.0, 0.1, 0.2}, 0.0, 9.999, 1e-3, 0.01, 11);
  CHECK(a == b);
  REQUIRE(a.size() == 3);
  for (const auto& t : a) CHECK(t.size() == 10000);
  const auto clean = sim::generate_trajectories(p, x0, {0.0, 0.1, 0.2}, 0.0, 9.999, 1e-3, 0.0, 11);
  double sum = 0.0, sum2 = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < a[i].size(); ++k) {
      CHECK(a[i].samples[k][3] == 0.0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double d = a[i].samples[k][c] - clean[i].samples[k][c];
        sum += d;
        sum2 += d * d;
        ++n;
      }
    }
  const double var = sum2 / static_cast<double>(n) - (sum / static_cast<double>(n)) * (sum / static_cast<double>(n));
  CHECK(var == Approx(0.01).epsilon(0.03));
  CHECK_THROWS_AS(sim::generate_trajectories(p, x0, {0.0}, 0.0, 1.0, 1e-3, 0.0, 1), ContractViolation);
}

TEST_CASE("collections are verbatim slices") {
  const sim::DuffingParams p;
  const auto trajs =
      sim::generate_trajectories(p, sim::random_initial_states(3, 1.0, 2), {0.0, 0.1, 0.2}, 0.0, 1.999, 1e-3, 0.01, 2);
  const auto data = sim::sample_collections(trajs, 20, 500, 4);
  REQUIRE(data.collections.size() == 20);
  for (const auto& c : data.collections) {
    REQUIRE(c.samples.size() == 500);
    for (std::size_t k = 0; k < c.samples.size(); ++k) REQUIRE(c.samples[k] == trajs[c.source].samples[c.start + k]);
  }
  CHECK(data == sim::sample_collections(trajs, 20, 500, 4));

  const auto whole = sim::sample_collections(trajs, 2, 2000, 9);
  for (const auto& c : whole.collections) CHECK(c.samples == trajs[c.source].samples);
  CHECK_THROWS_AS(sim::sample_collections(trajs, 2, 2001, 9), ContractViolation);
}

TEST_CASE("full-size collection recipe") {
  const sim::DuffingParams p;
  const auto trajs = sim::generate_trajectories(p, sim::random_initial_states(3, 1.0, 2), {0.0, 0.1, 0.2}, 0.0,
                                                9.999, 1e-3, 0.01, 2);
  const auto data = sim::sample_collections(trajs, 100, 6000, 3);
  CHECK(data.collections.size() == 100);
  CHECK(data.collection_length() == 6000);
}

TEST_CASE("trajectory csv round trip") {
  const Trajectory t = sim::integrate_rk4(decay(), {1.0, 0.1, 1.0 / 3.0, 0.0}, 0.0, 0.05, 1e-3);
  std::stringstream ss;
  sim::write_trajectory_csv(ss, t);
  const std::string text = ss.str();
  CHECK(text.rfind("t,z0,z1,z2,z3\n", 0) == 0);
  const Trajectory back = sim::read_trajectory_csv(ss);
  CHECK(back.samples == t.samples);

  std::stringstream bad("t,z0\n0,abc\n");
  CHECK_THROWS_AS(sim::read_trajectory_csv(bad), FormatError);
  std::stringstream header("x,y\n");
  CHECK_THROWS_AS(sim::read_trajectory_csv(header), FormatError);
}
