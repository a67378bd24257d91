#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "dnd/certkit/search.hpp"
#include "dnd/digest.hpp"
#include "dnd/errors.hpp"
#include "dnd/neuralfield/model_json.hpp"
#include "dnd/neuralfield/training.hpp"
#include "dnd/perturbkit/perturb.hpp"
#include "dnd/simkit/dataset.hpp"
#include "dnd/simkit/trajectory_csv.hpp"

namespace dnd::pipeline {

using nlohmann::json;

inline constexpr int kSchemaVersion = 1;

struct SystemConfig {
  sim::DuffingParams params;
  sim::InputLaw input_law = sim::InputLaw::case_study;
};

struct DatasetConfig {
  std::size_t trajectories = 3;
  std::size_t points = 2000;  // samples per trajectory, endpoints included
  double dt = 1e-3;
  double noise_variance = 0.01;
  std::size_t collections = 20;
  std::size_t collection_length = 500;
  std::vector<double> u0 = {0.0, 0.1, 0.2};
  double initial_state_range = 1.0;  // x0 uniform in [-range, range]^2
  std::uint64_t seed_d1 = 11;
  std::uint64_t seed_d2 = 22;
};

struct ArchitectureConfig {
  std::vector<std::size_t> hidden = {16};
  nn::Activation activation = nn::Activation::leaky_relu(0.2);
  std::uint64_t init_seed = 3;
};

struct CertificateConfig {
  json qsr = {{"kind", "strict_passivity_family"}, {"s_scale", 0.5}};
  double p22_scale = 0.01;  // P22 = -p22_scale I
  cert::SearchConfig search;
};

struct EvaluationConfig {
  double test_u0 = 0.15;
  std::uint64_t test_seed = 99;
  double test_duration = 5.0;  // seconds of held-out rollout
  std::size_t empirical_pairs = 20;
  std::size_t empirical_samples = 1000;
  double empirical_dt = 1e-2;
  std::uint64_t empirical_seed = 7;
};

struct PipelineConfig {
  std::string profile = "desk";
  SystemConfig system;
  DatasetConfig dataset;
  ArchitectureConfig architecture;
  nn::TrainConfig train_baseline;
  nn::TrainConfig train_bias;
  CertificateConfig certificate;
  perturb::SolverConfig solver;
  EvaluationConfig evaluation;

  std::vector<std::size_t> layer_dims() const {
    std::vector<std::size_t> d{sim::kAugmentedDim};
    d.insert(d.end(), architecture.hidden.begin(), architecture.hidden.end());
    d.push_back(sim::kAugmentedDim);
    return d;
  }

  mat::DenseMatrix p22() const { return mat::DenseMatrix::identity(sim::kAugmentedDim, -certificate.p22_scale); }

  void validate() const {
    detail::require(dataset.seed_d1 != dataset.seed_d2, "config: the D1 and D2 seeds must differ");
    detail::require(certificate.p22_scale > 0.0, "config: p22_scale must be positive");
    detail::require(dataset.trajectories >= 1 && dataset.u0.size() == dataset.trajectories,
                    "config: dataset.u0 needs one entry per trajectory");
    detail::require(dataset.points >= 2 && dataset.dt > 0.0, "config: dataset needs >= 2 points and dt > 0");
    detail::require(dataset.collection_length <= dataset.points, "config: collection_length exceeds points");
    detail::require(dataset.noise_variance >= 0.0, "config: noise_variance must be non-negative");
    detail::require(train_bias.mask == nn::TrainableMask::biases_only, "config: train_bias must use the biases_only mask");
    detail::require(evaluation.test_duration > 0.0, "config: test_duration must be positive");
    train_baseline.validate();
    train_bias.validate();
    solver.validate();
    certificate.search.validate();
  }
};

// Profiles differ only in the data recipe: "paper" uses 3 x 10000 points and 100 collections
// of 6000, "desk" a scaled-down version of the same.
inline PipelineConfig profile_config(const std::string& name) {
  PipelineConfig c;
  c.profile = name;
  c.train_baseline.epochs = 1500;
  c.train_baseline.learning_rate = 1e-2;
  c.train_baseline.lr_decay = 0.998;
  c.train_baseline.horizon = 50;
  c.train_baseline.dt = 5e-3;
  c.train_baseline.seed = 5;
  c.train_bias = c.train_baseline;
  c.train_bias.mask = nn::TrainableMask::biases_only;
  c.train_bias.epochs = 300;
  c.train_bias.learning_rate = 5e-3;
  c.train_bias.seed = 6;
  if (name == "desk") return c;
  if (name == "paper") {
    c.dataset.points = 10000;
    c.dataset.collections = 100;
    c.dataset.collection_length = 6000;
    return c;
  }
  throw ContractViolation("unknown profile '" + name + "' (expected desk or paper)");
}

namespace internal {

inline void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw FormatError("config: " + where + " must be an object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw FormatError("config: unknown key '" + k + "' in " + where);
}

template <class T>
void read(const json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

inline json train_to_json(const nn::TrainConfig& t) {
  return {{"learning_rate", t.learning_rate}, {"epochs", t.epochs},     {"batch_size", t.batch_size},
          {"horizon", t.horizon},             {"dt", t.dt},             {"beta1", t.beta1},
          {"beta2", t.beta2},                 {"adam_eps", t.adam_eps}, {"lr_decay", t.lr_decay},
          {"grad_clip", t.grad_clip},         {"keep_best", t.keep_best}, {"seed", t.seed},
          {"mask", t.mask == nn::TrainableMask::all ? "all" : "biases_only"}};
}

inline void train_from_json(const json& j, nn::TrainConfig& t, const std::string& where) {
  check_keys(j,
             {"learning_rate", "epochs", "batch_size", "horizon", "dt", "beta1", "beta2", "adam_eps", "lr_decay",
              "grad_clip", "keep_best", "seed", "mask"},
             where);
  read(j, "learning_rate", t.learning_rate);
  read(j, "epochs", t.epochs);
  read(j, "batch_size", t.batch_size);
  read(j, "horizon", t.horizon);
  read(j, "dt", t.dt);
  read(j, "beta1", t.beta1);
  read(j, "beta2", t.beta2);
  read(j, "adam_eps", t.adam_eps);
  read(j, "lr_decay", t.lr_decay);
  read(j, "grad_clip", t.grad_clip);
  read(j, "keep_best", t.keep_best);
  read(j, "seed", t.seed);
  if (j.contains("mask")) {
    const auto m = j.at("mask").get<std::string>();
    if (m == "all") t.mask = nn::TrainableMask::all;
    else if (m == "biases_only") t.mask = nn::TrainableMask::biases_only;
    else throw FormatError("config: mask must be all or biases_only");
  }
}

inline json search_to_json(const cert::SearchConfig& s) {
  return {{"psd_tol", s.psd_tol},           {"lambda_min", s.lambda_min},
          {"lambda_max", s.lambda_max},     {"grid_points", s.grid_points},
          {"golden_iterations", s.golden_iterations}, {"sweeps", s.sweeps},
          {"index_max", s.index_max},       {"bisection_iterations", s.bisection_iterations}};
}

inline void search_from_json(const json& j, cert::SearchConfig& s) {
  check_keys(j,
             {"psd_tol", "lambda_min", "lambda_max", "grid_points", "golden_iterations", "sweeps", "index_max",
              "bisection_iterations"},
             "certificate.search");
  read(j, "psd_tol", s.psd_tol);
  read(j, "lambda_min", s.lambda_min);
  read(j, "lambda_max", s.lambda_max);
  read(j, "grid_points", s.grid_points);
  read(j, "golden_iterations", s.golden_iterations);
  read(j, "sweeps", s.sweeps);
  read(j, "index_max", s.index_max);
  read(j, "bisection_iterations", s.bisection_iterations);
}

inline json solver_to_json(const perturb::SolverConfig& s) {
  return {{"mode", perturb::to_string(s.mode)},
          {"penalty", perturb::to_string(s.penalty)},
          {"rho_initial", s.rho_initial},
          {"rho_growth", s.rho_growth},
          {"max_rounds", s.max_rounds},
          {"step_initial", s.step_initial},
          {"backtrack", s.backtrack},
          {"max_iterations", s.max_iterations},
          {"psd_tol", s.psd_tol},
          {"margin", s.margin},
          {"stagnation_tol", s.stagnation_tol},
          {"seed", s.seed}};
}

inline void solver_from_json(const json& j, perturb::SolverConfig& s) {
  check_keys(j,
             {"mode", "penalty", "rho_initial", "rho_growth", "max_rounds", "step_initial", "backtrack", "max_iterations",
              "psd_tol", "margin", "stagnation_tol", "seed"},
             "solver");
  if (j.contains("mode")) s.mode = perturb::solver_mode_from_string(j.at("mode").get<std::string>());
  if (j.contains("penalty")) s.penalty = perturb::penalty_kind_from_string(j.at("penalty").get<std::string>());
  read(j, "rho_initial", s.rho_initial);
  read(j, "rho_growth", s.rho_growth);
  read(j, "max_rounds", s.max_rounds);
  read(j, "step_initial", s.step_initial);
  read(j, "backtrack", s.backtrack);
  read(j, "max_iterations", s.max_iterations);
  read(j, "psd_tol", s.psd_tol);
  read(j, "margin", s.margin);
  read(j, "stagnation_tol", s.stagnation_tol);
  read(j, "seed", s.seed);
}

inline mat::DenseMatrix matrix_from_rows(const json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  if (rows.empty()) throw FormatError("config: empty matrix");
  mat::DenseMatrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols()) throw FormatError("config: ragged matrix rows");
    for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) = rows[r][c];
  }
  return m;
}

}  // namespace internal

// {"kind": "strict_passivity_family", "s_scale": ..} or a named preset
// ({"kind": "passivity"}, {"kind": "l2_gain", "gamma": ..}, ...) or explicit
// {"kind": "matrices", "Q": [[..]], "S": [[..]], "R": [[..]]}.
inline cert::QsrFamily qsr_family_from_json(const json& j, std::size_t n0) {
  try {
    const std::string kind = j.at("kind").get<std::string>();
    const std::size_t ny = j.value("ny", n0 / 2);
    const std::size_t nu = n0 - ny;
    if (kind == "strict_passivity_family") return cert::StrictPassivityFamily{j.value("s_scale", 0.5), ny};
    if (kind == "matrices") {
      cert::QsrSpec q{internal::matrix_from_rows(j.at("Q")), internal::matrix_from_rows(j.at("S")),
                      internal::matrix_from_rows(j.at("R"))};
      q.validate();
      return q;
    }
    if (kind == "passivity") return cert::qsr_preset(cert::Passivity{}, ny, nu);
    if (kind == "l2_gain") return cert::qsr_preset(cert::L2Gain{j.at("gamma").get<double>()}, ny, nu);
    if (kind == "strict_passivity")
      return cert::qsr_preset(cert::StrictPassivity{j.at("eps").get<double>(), j.at("delta").get<double>()}, ny, nu);
    if (kind == "conicity")
      return cert::qsr_preset(cert::Conicity{j.at("c").get<double>(), j.at("r").get<double>()}, ny, nu);
    if (kind == "sector") return cert::qsr_preset(cert::Sector{j.at("a").get<double>(), j.at("b").get<double>()}, ny, nu);
    throw FormatError("config: unknown qsr kind '" + kind + "'");
  } catch (const json::exception& e) {
    throw FormatError(std::string("config: malformed qsr: ") + e.what());
  }
}

// Command-line shorthand: "passivity", "strict_passivity_family", "l2_gain:2", "sector:-1,1",
// "conicity:0,1", "strict_passivity:0.1,0.1".
inline json qsr_json_from_string(const std::string& text) {
  const auto colon = text.find(':');
  const std::string kind = text.substr(0, colon);
  std::vector<double> args;
  if (colon != std::string::npos) {
    std::string rest = text.substr(colon + 1);
    std::size_t pos = 0;
    while (pos <= rest.size()) {
      const auto comma = rest.find(',', pos);
      args.push_back(sim::parse_double(rest.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos)));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
  }
  const auto need = [&](std::size_t n) {
    if (args.size() != n) throw ContractViolation("--qsr " + kind + " takes " + std::to_string(n) + " parameter(s)");
  };
  if (kind == "passivity" || kind == "strict_passivity_family") {
    need(0);
    return {{"kind", kind}};
  }
  if (kind == "l2_gain") return need(1), json{{"kind", kind}, {"gamma", args[0]}};
  if (kind == "sector") return need(2), json{{"kind", kind}, {"a", args[0]}, {"b", args[1]}};
  if (kind == "conicity") return need(2), json{{"kind", kind}, {"c", args[0]}, {"r", args[1]}};
  if (kind == "strict_passivity") return need(2), json{{"kind", kind}, {"eps", args[0]}, {"delta", args[1]}};
  throw ContractViolation("unknown --qsr kind '" + kind + "'");
}

inline json config_to_json(const PipelineConfig& c) {
  const auto& d = c.dataset;
  return {{"schema_version", kSchemaVersion},
          {"profile", c.profile},
          {"system",
           {{"a", c.system.params.a},
            {"b", c.system.params.b},
            {"c", c.system.params.c},
            {"input_law", c.system.input_law == sim::InputLaw::case_study ? "case_study" : "zero"}}},
          {"dataset",
           {{"trajectories", d.trajectories},
            {"points", d.points},
            {"dt", d.dt},
            {"noise_variance", d.noise_variance},
            {"collections", d.collections},
            {"collection_length", d.collection_length},
            {"u0", d.u0},
            {"initial_state_range", d.initial_state_range},
            {"seed_d1", d.seed_d1},
            {"seed_d2", d.seed_d2}}},
          {"architecture",
           {{"hidden", c.architecture.hidden},
            {"activation", nn::activation_to_json(c.architecture.activation)},
            {"init_seed", c.architecture.init_seed}}},
          {"train_baseline", internal::train_to_json(c.train_baseline)},
          {"train_bias", internal::train_to_json(c.train_bias)},
          {"certificate",
           {{"qsr", c.certificate.qsr},
            {"p22_scale", c.certificate.p22_scale},
            {"search", internal::search_to_json(c.certificate.search)}}},
          {"solver", internal::solver_to_json(c.solver)},
          {"evaluation",
           {{"test_u0", c.evaluation.test_u0},
            {"test_seed", c.evaluation.test_seed},
            {"test_duration", c.evaluation.test_duration},
            {"empirical_pairs", c.evaluation.empirical_pairs},
            {"empirical_samples", c.evaluation.empirical_samples},
            {"empirical_dt", c.evaluation.empirical_dt},
            {"empirical_seed", c.evaluation.empirical_seed}}}};
}

// Keys absent from `j` keep the values of the profile named in j["profile"] (or `fallback_profile`).
inline PipelineConfig config_from_json(const json& j, const std::string& fallback_profile = "desk") {
  using internal::read;
  try {
    internal::check_keys(j,
                         {"schema_version", "profile", "system", "dataset", "architecture", "train_baseline",
                          "train_bias", "certificate", "solver", "evaluation"},
                         "config");
    if (!j.contains("schema_version")) throw FormatError("config: missing schema_version");
    const int version = j.at("schema_version").get<int>();
    if (version != kSchemaVersion)
      throw FormatError("config: schema_version " + std::to_string(version) + " is not supported (expected " +
                        std::to_string(kSchemaVersion) + ")");
    PipelineConfig c = profile_config(j.value("profile", fallback_profile));

    if (j.contains("system")) {
      const json& s = j.at("system");
      internal::check_keys(s, {"a", "b", "c", "input_law"}, "system");
      read(s, "a", c.system.params.a);
      read(s, "b", c.system.params.b);
      read(s, "c", c.system.params.c);
      if (s.contains("input_law")) {
        const auto law = s.at("input_law").get<std::string>();
        if (law == "case_study") c.system.input_law = sim::InputLaw::case_study;
        else if (law == "zero") c.system.input_law = sim::InputLaw::zero;
        else throw FormatError("config: input_law must be case_study or zero");
      }
    }
    if (j.contains("dataset")) {
      const json& s = j.at("dataset");
      internal::check_keys(s,
                           {"trajectories", "points", "dt", "noise_variance", "collections", "collection_length", "u0",
                            "initial_state_range", "seed_d1", "seed_d2"},
                           "dataset");
      auto& d = c.dataset;
      read(s, "trajectories", d.trajectories);
      read(s, "points", d.points);
      read(s, "dt", d.dt);
      read(s, "noise_variance", d.noise_variance);
      read(s, "collections", d.collections);
      read(s, "collection_length", d.collection_length);
      read(s, "u0", d.u0);
      read(s, "initial_state_range", d.initial_state_range);
      read(s, "seed_d1", d.seed_d1);
      read(s, "seed_d2", d.seed_d2);
    }
    if (j.contains("architecture")) {
      const json& s = j.at("architecture");
      internal::check_keys(s, {"hidden", "activation", "init_seed"}, "architecture");
      read(s, "hidden", c.architecture.hidden);
      if (s.contains("activation")) c.architecture.activation = nn::activation_from_json(s.at("activation"));
      read(s, "init_seed", c.architecture.init_seed);
    }
    if (j.contains("train_baseline")) internal::train_from_json(j.at("train_baseline"), c.train_baseline, "train_baseline");
    if (j.contains("train_bias")) internal::train_from_json(j.at("train_bias"), c.train_bias, "train_bias");
    if (j.contains("certificate")) {
      const json& s = j.at("certificate");
      internal::check_keys(s, {"qsr", "p22_scale", "search"}, "certificate");
      if (s.contains("qsr")) c.certificate.qsr = s.at("qsr");
      read(s, "p22_scale", c.certificate.p22_scale);
      if (s.contains("search")) internal::search_from_json(s.at("search"), c.certificate.search);
    }
    if (j.contains("solver")) internal::solver_from_json(j.at("solver"), c.solver);
    if (j.contains("evaluation")) {
      const json& s = j.at("evaluation");
      internal::check_keys(s,
                           {"test_u0", "test_seed", "test_duration", "empirical_pairs", "empirical_samples",
                            "empirical_dt", "empirical_seed"},
                           "evaluation");
      read(s, "test_u0", c.evaluation.test_u0);
      read(s, "test_seed", c.evaluation.test_seed);
      read(s, "test_duration", c.evaluation.test_duration);
      read(s, "empirical_pairs", c.evaluation.empirical_pairs);
      read(s, "empirical_samples", c.evaluation.empirical_samples);
      read(s, "empirical_dt", c.evaluation.empirical_dt);
      read(s, "empirical_seed", c.evaluation.empirical_seed);
    }
    qsr_family_from_json(c.certificate.qsr, sim::kAugmentedDim);
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
}

inline PipelineConfig load_config(const std::filesystem::path& path, const std::string& fallback_profile = "desk") {
  const std::string text = nn::read_text_file(path);
  try {
    return config_from_json(json::parse(text), fallback_profile);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// SHA-256 of the canonical (compact, key-sorted) config document.
inline std::string config_digest(const PipelineConfig& c) { return sha256_hex(config_to_json(c).dump()); }

}  // namespace dnd::pipeline
