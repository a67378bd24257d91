#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <random>

#include "support.hpp"

using namespace dnd;
using Catch::Approx;
using mat::DenseMatrix;
using nn::Activation;
using nn::Layer;
using nn::Mlp;
using sim::Vector;

namespace {

Mlp scalar_linear(double w, double b) { return Mlp({Layer{DenseMatrix{{w}}, {b}, Activation::identity()}}); }

// Windows cut from a rollout of `net` itself.
std::vector<nn::Window> self_windows(const Mlp& net, std::size_t count, std::size_t horizon, double dt,
                                     std::mt19937_64& rng) {
  std::vector<nn::Window> out;
  for (std::size_t k = 0; k < count; ++k) {
    const auto t = nn::rollout(net, testing_support::random_vector(net.input_dim(), rng), horizon, dt);
    out.push_back(t.samples);
  }
  return out;
}

std::vector<nn::Window> random_windows(std::size_t n, std::size_t count, std::size_t horizon, std::mt19937_64& rng) {
  std::vector<nn::Window> out(count);
  for (auto& w : out)
    for (std::size_t k = 0; k <= horizon; ++k) w.push_back(testing_support::random_vector(n, rng));
  return out;
}

}  // namespace

TEST_CASE("activation slope bounds") {
  CHECK(Activation::relu().alpha() == 0.0);
  CHECK(Activation::relu().beta() == 1.0);
  CHECK(Activation::leaky_relu(0.2).alpha() == 0.2);
  CHECK(Activation::leaky_relu(0.2).beta() == 1.0);
  CHECK(Activation::leaky_relu(3.0).alpha() == 1.0);
  CHECK(Activation::leaky_relu(3.0).beta() == 3.0);
  CHECK(Activation::identity().alpha() == 1.0);
  CHECK(Activation::sigmoid().beta() == 1.0);
  CHECK_THROWS_AS(Activation::leaky_relu(0.0), ContractViolation);
}

TEST_CASE("forward pass") {
  Mlp zero({Layer{DenseMatrix(3, 2), Vector(3, 0.0), Activation::relu()},
            Layer{DenseMatrix(2, 3), Vector(2, 0.0), Activation::identity()}});
  CHECK(nn::forward(zero, Vector{0.4, -2.0}) == Vector{0.0, 0.0});

  const Mlp lin({Layer{DenseMatrix{{1.0, 2.0}, {3.0, 4.0}}, {0.5, -0.5}, Activation::identity()}});
  CHECK(nn::forward(lin, Vector{1.0, 1.0}) == Vector{3.5, 6.5});

  const Mlp tiny({Layer{DenseMatrix{{1.0}}, {0.0}, Activation::tanh()}, Layer{DenseMatrix{{2.0}}, {0.5}, Activation::identity()}});
  CHECK(nn::forward(tiny, Vector{0.0}) == Vector{0.5});

  CHECK_THROWS_AS(nn::forward(tiny, Vector{0.0, 1.0}), ContractViolation);
}

TEST_CASE("network shape contracts") {
  CHECK_THROWS_AS(Mlp({Layer{DenseMatrix(2, 2), Vector(2), Activation::tanh()}}), ContractViolation);
  CHECK_THROWS_AS(Mlp({Layer{DenseMatrix(3, 2), Vector(3), Activation::identity()}}), ContractViolation);
  CHECK_THROWS_AS(Mlp({Layer{DenseMatrix(2, 2), Vector(1), Activation::identity()}}), ContractViolation);
  const Mlp net = Mlp::random({4, 16, 4}, Activation::leaky_relu(0.2), 3);
  CHECK(net.dims() == std::vector<std::size_t>{4, 16, 4});
  CHECK(perturb::flatten_weights(net).size() == 128);
  CHECK(net == Mlp::random({4, 16, 4}, Activation::leaky_relu(0.2), 3));
}

TEST_CASE("rollout closed forms") {
  Mlp zero({Layer{DenseMatrix(2, 2), Vector(2, 0.0), Activation::identity()}});
  for (const auto& s : nn::rollout(zero, {0.3, -1.0}, 10, 0.1).samples) CHECK(s == Vector{0.3, -1.0});

  Mlp drift({Layer{DenseMatrix(2, 2), Vector{1.0, 1.0}, Activation::identity()}});
  const auto d = nn::rollout(drift, {0.0, 2.0}, 100, 0.01);
  for (std::size_t k = 0; k < d.size(); ++k) {
    CHECK(std::abs(d.samples[k][0] - d.time(k)) < 1e-12);
    CHECK(std::abs(d.samples[k][1] - 2.0 - d.time(k)) < 1e-12);
  }

  const auto e = nn::rollout(scalar_linear(-1.0, 0.0), {1.0}, 1000, 1e-3);
  CHECK(std::abs(e.back()[0] - std::exp(-1.0)) < 1e-8);
  CHECK_THROWS_AS(nn::rollout(zero, {0.0, 0.0}, 0, 0.1), ContractViolation);
  CHECK_THROWS_AS(nn::rollout(scalar_linear(1e6, 0.0), {1.0}, 1000, 0.1), IntegrationError);
}

TEST_CASE("rollout prefixes agree") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Mlp net = testing_support::random_net({3, 6, 3}, testing_support::random_activation(rng), rng);
    const Vector z0 = testing_support::random_vector(3, rng);
    const auto full = nn::rollout(net, z0, 40, 0.01);
    const auto part = nn::rollout(net, z0, 17, 0.01);
    for (std::size_t k = 0; k < part.size(); ++k) REQUIRE(part.samples[k] == full.samples[k]);
  }
}

TEST_CASE("loss vanishes on self-generated data") {
  std::mt19937_64 rng(9);
  const Mlp net = testing_support::random_net({2, 5, 2}, Activation::tanh(), rng);
  const auto windows = self_windows(net, 4, 10, 0.05, rng);
  const auto lg = nn::loss_and_gradient(net, windows, 10, 0.05, nn::TrainableMask::all);
  CHECK(lg.loss == 0.0);
  CHECK(lg.gradient.norm() < 1e-10);
  CHECK(nn::batch_loss(net, windows, 10, 0.05) == lg.loss);
}

TEST_CASE("gradient matches central differences") {
  std::mt19937_64 rng(13);
  const double h = 1e-6;
  for (int trial = 0; trial < 10; ++trial) {
    const Activation act = trial % 2 == 0 ? Activation::tanh() : Activation::sigmoid();
    const Mlp net = testing_support::random_net({1, 4, 1}, act, rng);
    const auto windows = random_windows(1, 3, 8, rng);
    const auto lg = nn::loss_and_gradient(net, windows, 8, 0.05, nn::TrainableMask::all);
    const Vector analytic = nn::flatten(lg.gradient);
    Vector p = nn::flatten_parameters(net);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double keep = p[i];
      p[i] = keep + h;
      const double up = nn::batch_loss(nn::with_parameters(net, p), windows, 8, 0.05);
      p[i] = keep - h;
      const double down = nn::batch_loss(nn::with_parameters(net, p), windows, 8, 0.05);
      p[i] = keep;
      const double fd = (up - down) / (2.0 * h);
      const double scale = std::max({std::abs(fd), std::abs(analytic[i]), 1e-6});
      REQUIRE(std::abs(fd - analytic[i]) / scale < 1e-4);
    }
  }
}

TEST_CASE("bias mask zeroes weight gradients") {
  std::mt19937_64 rng(17);
  const Mlp net = testing_support::random_net({2, 4, 2}, Activation::leaky_relu(0.2), rng);
  const auto windows = random_windows(2, 3, 5, rng);
  const auto lg = nn::loss_and_gradient(net, windows, 5, 0.05, nn::TrainableMask::biases_only);
  for (const auto& w : lg.gradient.weights)
    for (double v : w.data()) CHECK(v == 0.0);
  const auto full = nn::loss_and_gradient(net, windows, 5, 0.05, nn::TrainableMask::all);
  CHECK(full.gradient.biases == lg.gradient.biases);
}

TEST_CASE("loss reports non-finite values with the batch index") {
  const Mlp net = scalar_linear(1.0, 0.0);
  std::vector<nn::Window> w{{Vector{1e300}, Vector{0.0}, Vector{0.0}}};
  try {
    nn::loss_and_gradient(net, w, 2, 1.0, nn::TrainableMask::all, 42);
    FAIL("expected a training error");
  } catch (const TrainingError& e) {
    CHECK(e.batch_index() == 42);
  }
}

namespace {

sim::Dataset decay_dataset(std::uint64_t seed) {
  const auto field = [](double, std::span<const double> z) { return Vector{-z[0]}; };
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<sim::Trajectory> trajs;
  for (int i = 0; i < 8; ++i) trajs.push_back(sim::integrate_rk4(field, {u(rng)}, 0.0, 2.0, 0.01));
  return sim::sample_collections(trajs, 16, 101, seed);
}

}  // namespace

TEST_CASE("training fits a linear decay") {
  nn::TrainConfig cfg;
  cfg.epochs = 300;
  cfg.learning_rate = 1e-2;
  cfg.horizon = 20;
  cfg.dt = 0.01;
  cfg.seed = 4;
  const auto data = decay_dataset(1);
  const Mlp init = Mlp::random({1, 8, 1}, Activation::tanh(), 2);
  const auto tr = nn::train(init, data, cfg);
  CHECK(tr.final_loss < tr.initial_loss);

  const auto model = nn::rollout(tr.net, {0.7}, 500, 0.01);
  double se = 0.0;
  for (std::size_t k = 0; k < model.size(); ++k) {
    const double d = model.samples[k][0] - 0.7 * std::exp(-model.time(k));
    se += d * d;
  }
  CHECK(std::sqrt(se / static_cast<double>(model.size())) < 0.05);

  const auto again = nn::train(init, data, cfg);
  CHECK(again.net == tr.net);
}

TEST_CASE("bias-only training keeps weights bit for bit") {
  nn::TrainConfig cfg;
  cfg.epochs = 20;
  cfg.horizon = 20;
  cfg.dt = 0.01;
  cfg.mask = nn::TrainableMask::biases_only;
  const auto data = decay_dataset(3);
  const Mlp init = Mlp::random({1, 8, 1}, Activation::leaky_relu(0.2), 5);
  const auto tr = nn::train(init, data, cfg);
  CHECK(perturb::flatten_weights(tr.net) == perturb::flatten_weights(init));
  CHECK(tr.final_loss <= tr.initial_loss);
}

TEST_CASE("training contracts") {
  nn::TrainConfig cfg;
  cfg.horizon = 200;
  cfg.dt = 0.01;
  CHECK_THROWS_AS(nn::train(scalar_linear(0.0, 0.0), decay_dataset(1), cfg), ContractViolation);
  cfg.horizon = 10;
  cfg.dt = 0.015;
  CHECK_THROWS_AS(nn::train(scalar_linear(0.0, 0.0), decay_dataset(1), cfg), ContractViolation);
  cfg.dt = 0.01;
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(nn::train(scalar_linear(0.0, 0.0), decay_dataset(1), cfg), ContractViolation);
}

TEST_CASE("model json round trip is exact") {
  std::mt19937_64 rng(21);
  const Mlp net = testing_support::random_net({4, 7, 3, 4}, Activation::leaky_relu(0.2), rng);
  const std::string text = nn::model_to_string(net, {{"note", "x"}});
  const auto back = nn::model_from_json(nlohmann::json::parse(text));
  CHECK(back.net == net);
  CHECK(back.metadata.at("note") == "x");
  CHECK(nn::model_to_string(back.net, back.metadata) == text);

  const auto path = std::filesystem::temp_directory_path() / "dnd_model_roundtrip.json";
  const std::string sha = nn::save_model(path, net);
  CHECK(sha == sha256_hex(nn::read_text_file(path)));
  CHECK(nn::load_model(path).net == net);
  std::filesystem::remove(path);
}

TEST_CASE("model json rejects malformed input") {
  auto j = nlohmann::json::parse(nn::model_to_string(scalar_linear(1.0, 0.0)));
  auto wrong_version = j;
  wrong_version["version"] = 99;
  CHECK_THROWS_AS(nn::model_from_json(wrong_version), FormatError);
  auto wrong_dims = j;
  wrong_dims["layer_dims"] = {2, 2};
  CHECK_THROWS_AS(nn::model_from_json(wrong_dims), FormatError);
  auto missing = j;
  missing.erase("layers");
  CHECK_THROWS_AS(nn::model_from_json(missing), FormatError);
  CHECK_THROWS_AS(nn::load_model("/nonexistent/model.json"), FormatError);
}
