#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dnd/errors.hpp"
#include "dnd/neuralfield/mlp.hpp"
#include "dnd/simkit/dataset.hpp"
#include "dnd/simkit/integrate.hpp"

namespace dnd::nn {

using sim::Trajectory;

// Integrates dz/dt = net(z) with fixed-step RK4; returns steps + 1 samples.
inline Trajectory rollout(const Mlp& net, const Vector& z0, std::size_t steps, double dt) {
  detail::require(z0.size() == net.input_dim(), "rollout: initial state has the wrong length");
  detail::require(steps >= 1, "rollout: need at least one step");
  return sim::integrate_steps([&net](double, std::span<const double> z) { return net.forward(z); }, z0, 0.0,
                              steps, dt);
}

struct TrainConfig {
  double learning_rate = 5e-3;
  std::size_t epochs = 300;
  std::size_t batch_size = 4;  // collections per optimizer step
  std::size_t horizon = 50;    // RK4 steps per training window
  double dt = 5e-3;            // model step; an integer multiple of the data spacing
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double lr_decay = 1.0;  // multiplicative, per epoch
  double grad_clip = 0.0; // global-norm clip; 0 disables
  bool keep_best = true;  // return the epoch with the lowest evaluation loss
  std::uint64_t seed = 1;
  TrainableMask mask = TrainableMask::all;

  void validate() const {
    detail::require(learning_rate > 0.0 && std::isfinite(learning_rate), "TrainConfig: learning rate must be positive");
    detail::require(epochs >= 1, "TrainConfig: epochs must be positive");
    detail::require(batch_size >= 1, "TrainConfig: batch size must be positive");
    detail::require(horizon >= 1, "TrainConfig: horizon must be positive");
    detail::require(dt > 0.0 && std::isfinite(dt), "TrainConfig: dt must be positive");
    detail::require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "TrainConfig: moment coefficients in [0, 1)");
    detail::require(adam_eps > 0.0, "TrainConfig: adam_eps must be positive");
    detail::require(lr_decay > 0.0, "TrainConfig: lr_decay must be positive");
    detail::require(grad_clip >= 0.0, "TrainConfig: grad_clip must be non-negative");
  }
};

// Samples spaced by the model step; sample 0 seeds the rollout.
using Window = std::vector<Vector>;

struct LossAndGradient {
  double loss = 0.0;
  Gradient gradient;
};

namespace internal {

struct StepTape {
  ForwardTape stages[4];
};

inline void check_batch(const Mlp& net, std::span<const Window> batch, std::size_t horizon) {
  dnd::detail::require(!batch.empty(), "loss: empty batch");
  for (const Window& w : batch) {
    dnd::detail::require(w.size() >= horizon + 1, "loss: horizon exceeds window length");
    for (std::size_t k = 0; k <= horizon; ++k)
      dnd::detail::require(w[k].size() == net.input_dim(), "loss: sample width does not match the network");
  }
}

}  // namespace internal

// Mean squared error between the rollout from each window's first sample and the window's
// samples 1..horizon, averaged over windows, steps and channels. The gradient is exact for
// this discrete loss: reverse accumulation through the unrolled RK4 steps.
inline LossAndGradient loss_and_gradient(const Mlp& net, std::span<const Window> batch, std::size_t horizon,
                                         double dt, TrainableMask mask, std::size_t batch_index = 0) {
  internal::check_batch(net, batch, horizon);
  const std::size_t n = net.input_dim();
  const double scale = 1.0 / static_cast<double>(batch.size() * horizon * n);
  const double half = 0.5 * dt;
  const double sixth = dt / 6.0;

  LossAndGradient out{0.0, Gradient::zeros_like(net)};
  std::vector<internal::StepTape> tapes(horizon);
  std::vector<Vector> states(horizon + 1);

  for (const Window& w : batch) {
    Gradient wgrad = Gradient::zeros_like(net);
    double wloss = 0.0;

    states[0] = w[0];
    for (std::size_t k = 0; k < horizon; ++k) {
      int stage = 0;
      auto recording = [&](double, std::span<const double> z) { return net.forward(z, tapes[k].stages[stage++]); };
      states[k + 1] = sim::rk4_step(recording, 0.0, states[k], dt);
      for (std::size_t c = 0; c < n; ++c) {
        const double e = states[k + 1][c] - w[k + 1][c];
        wloss += e * e;
      }
    }
    if (!std::isfinite(wloss)) throw TrainingError("non-finite training loss", batch_index);

    Vector zbar(n, 0.0);
    for (std::size_t k = horizon; k-- > 0;) {
      // Cotangent of state k+1: what flowed back from later steps plus its own loss term.
      for (std::size_t c = 0; c < n; ++c) zbar[c] += 2.0 * scale * (states[k + 1][c] - w[k + 1][c]);

      Vector k1bar(n), k2bar(n), k3bar(n), k4bar(n);
      for (std::size_t c = 0; c < n; ++c) {
        k1bar[c] = sixth * zbar[c];
        k2bar[c] = 2.0 * sixth * zbar[c];
        k3bar[c] = 2.0 * sixth * zbar[c];
        k4bar[c] = sixth * zbar[c];
      }
      const auto& st = tapes[k].stages;
      const Vector x4bar = backward(net, st[3], k4bar, wgrad, mask);
      for (std::size_t c = 0; c < n; ++c) {
        zbar[c] += x4bar[c];
        k3bar[c] += dt * x4bar[c];
      }
      const Vector x3bar = backward(net, st[2], k3bar, wgrad, mask);
      for (std::size_t c = 0; c < n; ++c) {
        zbar[c] += x3bar[c];
        k2bar[c] += half * x3bar[c];
      }
      const Vector x2bar = backward(net, st[1], k2bar, wgrad, mask);
      for (std::size_t c = 0; c < n; ++c) {
        zbar[c] += x2bar[c];
        k1bar[c] += half * x2bar[c];
      }
      const Vector x1bar = backward(net, st[0], k1bar, wgrad, mask);
      for (std::size_t c = 0; c < n; ++c) zbar[c] += x1bar[c];
    }

    out.loss += wloss * scale;
    out.gradient += wgrad;
  }
  if (!std::isfinite(out.loss)) throw TrainingError("non-finite training loss", batch_index);
  return out;
}

inline LossAndGradient loss_and_gradient(const Mlp& net, std::span<const Window> batch, const TrainConfig& cfg,
                                         std::size_t batch_index = 0) {
  return loss_and_gradient(net, batch, cfg.horizon, cfg.dt, cfg.mask, batch_index);
}

// Loss only; bitwise equal to loss_and_gradient(...).loss.
inline double batch_loss(const Mlp& net, std::span<const Window> batch, std::size_t horizon, double dt) {
  internal::check_batch(net, batch, horizon);
  const std::size_t n = net.input_dim();
  const double scale = 1.0 / static_cast<double>(batch.size() * horizon * n);
  auto field = [&net](double, std::span<const double> z) { return net.forward(z); };
  double total = 0.0;
  for (const Window& w : batch) {
    double wloss = 0.0;
    Vector z = w[0];
    for (std::size_t k = 0; k < horizon; ++k) {
      z = sim::rk4_step(field, 0.0, z, dt);
      for (std::size_t c = 0; c < n; ++c) {
        const double e = z[c] - w[k + 1][c];
        wloss += e * e;
      }
    }
    total += wloss * scale;
  }
  return total;
}

// Ratio between the model step and the data spacing.
inline std::size_t window_stride(double data_dt, double model_dt) {
  dnd::detail::require(data_dt > 0.0, "window_stride: dataset dt must be positive");
  const double ratio = std::round(model_dt / data_dt);
  dnd::detail::require(ratio >= 1.0 && std::abs(ratio * data_dt - model_dt) <= 1e-9 * std::max(1.0, model_dt),
                       "window_stride: model dt must be an integer multiple of the data spacing");
  return static_cast<std::size_t>(ratio);
}

inline Window make_window(const sim::Collection& c, std::size_t start, std::size_t stride, std::size_t horizon) {
  Window w;
  w.reserve(horizon + 1);
  for (std::size_t k = 0; k <= horizon; ++k) w.push_back(c.samples.at(start + k * stride));
  return w;
}

// Deterministic tiling of every collection by back-to-back windows; used to score a model on
// a dataset independently of the training RNG.
inline std::vector<Window> evaluation_windows(const sim::Dataset& data, std::size_t horizon, double model_dt) {
  const std::size_t stride = window_stride(data.dt, model_dt);
  const std::size_t span = horizon * stride;
  std::vector<Window> out;
  for (const auto& c : data.collections) {
    dnd::detail::require(c.samples.size() >= span + 1, "evaluation_windows: collection shorter than one window");
    for (std::size_t start = 0; start + span < c.samples.size(); start += span)
      out.push_back(make_window(c, start, stride, horizon));
  }
  return out;
}

inline double dataset_loss(const Mlp& net, const sim::Dataset& data, const TrainConfig& cfg) {
  const auto windows = evaluation_windows(data, cfg.horizon, cfg.dt);
  return batch_loss(net, windows, cfg.horizon, cfg.dt);
}

struct TrainResult {
  Mlp net;
  double initial_loss = 0.0;  // evaluation loss of the input parameters
  double final_loss = 0.0;    // evaluation loss of the returned parameters
  std::size_t best_epoch = 0; // 0 means the input parameters were kept
  std::vector<double> epoch_losses;
};

// Adam on mini-batches of collections. Each collection in a batch contributes one window at a
// uniformly random offset. With mask = biases_only the weight entries are never written.
inline TrainResult train(const Mlp& initial, const sim::Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  dnd::detail::require(!data.collections.empty(), "train: empty dataset");
  const std::size_t stride = window_stride(data.dt, cfg.dt);
  const std::size_t span = cfg.horizon * stride;
  for (const auto& c : data.collections)
    dnd::detail::require(c.samples.size() >= span + 1, "train: horizon exceeds collection length");

  const auto eval_windows = evaluation_windows(data, cfg.horizon, cfg.dt);
  auto evaluate = [&](const Mlp& net) { return batch_loss(net, eval_windows, cfg.horizon, cfg.dt); };

  Vector params = flatten_parameters(initial);
  const std::vector<bool> is_bias = bias_mask(initial);
  Vector m1(params.size(), 0.0), m2(params.size(), 0.0);

  TrainResult result{initial, evaluate(initial), 0.0, 0, {}};
  result.final_loss = result.initial_loss;
  if (!std::isfinite(result.initial_loss)) result.final_loss = std::numeric_limits<double>::infinity();

  auto rng = sim::seeded_engine(cfg.seed, 0x7a);
  std::vector<std::size_t> order(data.collections.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  Mlp net = initial;
  double lr = cfg.learning_rate;
  std::size_t step = 0;
  std::size_t batch_counter = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      std::vector<Window> batch;
      for (std::size_t j = b0; j < std::min(order.size(), b0 + cfg.batch_size); ++j) {
        const auto& c = data.collections[order[j]];
        std::uniform_int_distribution<std::size_t> offset(0, c.samples.size() - 1 - span);
        batch.push_back(make_window(c, offset(rng), stride, cfg.horizon));
      }
      const LossAndGradient lg = loss_and_gradient(net, batch, cfg, batch_counter++);
      Vector g = flatten(lg.gradient);
      if (cfg.grad_clip > 0.0) {
        const double gn = mat::norm2(g);
        if (gn > cfg.grad_clip)
          for (double& v : g) v *= cfg.grad_clip / gn;
      }

      ++step;
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      for (std::size_t i = 0; i < params.size(); ++i) {
        if (cfg.mask == TrainableMask::biases_only && !is_bias[i]) continue;
        m1[i] = cfg.beta1 * m1[i] + (1.0 - cfg.beta1) * g[i];
        m2[i] = cfg.beta2 * m2[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        params[i] -= lr * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + cfg.adam_eps);
      }
      net = with_parameters(net, params);
    }
    lr *= cfg.lr_decay;

    const double loss = evaluate(net);
    if (!std::isfinite(loss)) throw TrainingError("evaluation loss diverged", batch_counter);
    result.epoch_losses.push_back(loss);
    if (!cfg.keep_best || loss < result.final_loss) {
      result.net = net;
      result.final_loss = loss;
      result.best_epoch = epoch;
    }
  }
  return result;
}

}  // namespace dnd::nn
