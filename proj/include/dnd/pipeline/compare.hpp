#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "dnd/errors.hpp"
#include "dnd/neuralfield/training.hpp"
#include "dnd/simkit/integrate.hpp"

namespace dnd::pipeline {

using mat::Vector;

struct ChannelMetrics {
  std::vector<double> rmse;     // per channel
  std::vector<double> max_abs;  // per channel
  double rmse_total = 0.0;      // over all channels and samples
};

struct ModelMetrics {
  std::optional<ChannelMetrics> metrics;  // empty when the rollout failed
  std::string error;
};

// Keyed by name so that the table does not depend on the order models were supplied in.
struct ComparisonTable {
  std::map<std::string, ModelMetrics> models;
  std::map<std::pair<std::string, std::string>, ChannelMetrics> pairwise;  // key ordered (a < b)
};

inline ChannelMetrics trajectory_metrics(const sim::Trajectory& a, const sim::Trajectory& b) {
  detail::require(a.size() == b.size() && a.size() > 0, "trajectory_metrics: trajectories differ in length");
  detail::require(a.dim() == b.dim(), "trajectory_metrics: trajectories differ in width");
  const std::size_t n = a.dim();
  ChannelMetrics m{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), 0.0};
  double total = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k)
    for (std::size_t c = 0; c < n; ++c) {
      const double d = a.samples[k][c] - b.samples[k][c];
      m.rmse[c] += d * d;
      total += d * d;
      m.max_abs[c] = std::max(m.max_abs[c], std::abs(d));
    }
  const double count = static_cast<double>(a.size());
  for (double& v : m.rmse) v = std::sqrt(v / count);
  m.rmse_total = std::sqrt(total / (count * static_cast<double>(n)));
  return m;
}

// Rolls every model out from z0 for `steps` steps of `dt` and scores it against `truth`, which
// must be sampled on the same grid. A model whose rollout fails is reported with its error and
// left out of the pairwise table.
inline ComparisonTable compare_models(const std::vector<std::pair<std::string, nn::Mlp>>& models,
                                      const Vector& z0, std::size_t steps, double dt, const sim::Trajectory& truth) {
  detail::require(truth.size() == steps + 1, "compare_models: ground truth must have steps + 1 samples");
  detail::require(std::abs(truth.dt - dt) <= 1e-12 * std::max(1.0, dt), "compare_models: ground truth dt differs");
  ComparisonTable table;
  std::map<std::string, sim::Trajectory> rolled;
  for (const auto& [name, net] : models) {
    detail::require(!table.models.count(name), "compare_models: duplicate model name '" + name + "'");
    ModelMetrics mm;
    try {
      sim::Trajectory t = nn::rollout(net, z0, steps, dt);
      mm.metrics = trajectory_metrics(t, truth);
      rolled.emplace(name, std::move(t));
    } catch (const Error& e) {
      mm.error = std::string(e.kind()) + ": " + e.what();
    }
    table.models.emplace(name, std::move(mm));
  }
  for (auto a = rolled.begin(); a != rolled.end(); ++a)
    for (auto b = std::next(a); b != rolled.end(); ++b)
      table.pairwise.emplace(std::make_pair(a->first, b->first), trajectory_metrics(a->second, b->second));
  return table;
}

inline nlohmann::json metrics_to_json(const ChannelMetrics& m) {
  return {{"rmse", m.rmse}, {"max_abs", m.max_abs}, {"rmse_total", m.rmse_total}};
}

inline nlohmann::json comparison_to_json(const ComparisonTable& t) {
  nlohmann::json models = nlohmann::json::object();
  for (const auto& [name, mm] : t.models)
    models[name] = mm.metrics ? metrics_to_json(*mm.metrics) : nlohmann::json{{"error", mm.error}};
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& [key, m] : t.pairwise) {
    nlohmann::json row = metrics_to_json(m);
    row["a"] = key.first;
    row["b"] = key.second;
    pairs.push_back(std::move(row));
  }
  return {{"models", std::move(models)}, {"pairwise", std::move(pairs)}};
}

}  // namespace dnd::pipeline
