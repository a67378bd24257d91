#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "dnd/certkit/certificate_json.hpp"
#include "dnd/certkit/search.hpp"
#include "dnd/errors.hpp"
#include "dnd/neuralfield/model_json.hpp"
#include "dnd/neuralfield/training.hpp"
#include "dnd/perturbkit/perturb.hpp"
#include "dnd/pipeline/compare.hpp"
#include "dnd/pipeline/config.hpp"
#include "dnd/simkit/dataset.hpp"
#include "dnd/simkit/trajectory_csv.hpp"

namespace dnd::pipeline {

class StageFailure : public Error {
 public:
  StageFailure(std::string stage, const std::string& what)
      : Error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)) {}
  const char* kind() const noexcept override { return "stage_failure"; }
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

struct Datasets {
  std::vector<sim::Trajectory> d1_trajectories;
  std::vector<sim::Trajectory> d2_trajectories;
  sim::Dataset d1;
  sim::Dataset d2;
  Vector test_z0;
  sim::Trajectory truth;  // noise-free, on the model grid
};

inline sim::Dataset make_dataset(const PipelineConfig& cfg, std::uint64_t seed, std::vector<sim::Trajectory>* raw) {
  const auto& d = cfg.dataset;
  const auto x0 = sim::random_initial_states(d.trajectories, d.initial_state_range, seed);
  const double t1 = static_cast<double>(d.points - 1) * d.dt;
  auto trajs = sim::generate_trajectories(cfg.system.params, x0, d.u0, 0.0, t1, d.dt, d.noise_variance, seed,
                                          cfg.system.input_law);
  sim::Dataset out = sim::sample_collections(trajs, d.collections, d.collection_length, seed);
  if (raw) *raw = std::move(trajs);
  return out;
}

// The held-out test: the configured input law from an initial state drawn under test_seed,
// simulated without noise on the data grid and subsampled onto the model grid.
inline std::pair<Vector, sim::Trajectory> test_ground_truth(const PipelineConfig& cfg, double model_dt) {
  const auto x0 = sim::random_initial_states(1, cfg.dataset.initial_state_range, cfg.evaluation.test_seed).front();
  Vector z0{x0[0], x0[1], cfg.evaluation.test_u0, 0.0};
  const std::size_t stride = nn::window_stride(cfg.dataset.dt, model_dt);
  const std::size_t steps = sim::step_count(0.0, cfg.evaluation.test_duration, model_dt);
  const auto fine = sim::integrate_steps(sim::augmented_duffing_field(cfg.system.params, cfg.system.input_law), z0,
                                         0.0, steps * stride, cfg.dataset.dt);
  sim::Trajectory truth{0.0, model_dt, {}};
  for (std::size_t k = 0; k <= steps; ++k) truth.samples.push_back(fine.samples[k * stride]);
  return {z0, truth};
}

inline Datasets build_datasets(const PipelineConfig& cfg) {
  Datasets ds;
  ds.d1 = make_dataset(cfg, cfg.dataset.seed_d1, &ds.d1_trajectories);
  ds.d2 = make_dataset(cfg, cfg.dataset.seed_d2, &ds.d2_trajectories);
  std::tie(ds.test_z0, ds.truth) = test_ground_truth(cfg, cfg.train_baseline.dt);
  return ds;
}

inline nn::Mlp initial_model(const PipelineConfig& cfg) {
  return nn::Mlp::random(cfg.layer_dims(), cfg.architecture.activation, cfg.architecture.init_seed);
}

inline cert::QsrFamily config_family(const PipelineConfig& cfg) {
  return qsr_family_from_json(cfg.certificate.qsr, sim::kAugmentedDim);
}

// The family whose relaxed indices are reported for the baseline.
inline cert::StrictPassivityFamily report_family(const cert::QsrFamily& f) {
  if (const auto* fam = std::get_if<cert::StrictPassivityFamily>(&f)) return *fam;
  return {};
}

struct ArtifactRef {
  std::string file;
  std::string sha256;
};

struct RunReport {
  std::string status = "running";
  std::string failed_stage;
  std::string message;
  std::string config_digest;

  std::optional<ArtifactRef> baseline_model;
  double baseline_initial_loss = 0.0;
  double baseline_final_loss = 0.0;
  std::size_t baseline_best_epoch = 0;
  std::optional<cert::RelaxedIndices> baseline_relaxed;

  std::optional<ArtifactRef> perturbed_model;
  std::optional<ArtifactRef> certificate;
  std::optional<cert::Certificate> perturbed_certificate;
  bool perturb_success = false;
  double perturbation_norm = 0.0;
  std::size_t perturb_iterations = 0;
  double perturb_best_min_eig = 0.0;
  std::string perturb_message;

  std::optional<ArtifactRef> final_model;
  std::optional<ArtifactRef> final_certificate;
  std::optional<cert::Certificate> final_cert;
  double perturbed_d2_loss = 0.0;
  double final_d2_loss = 0.0;
  bool weights_preserved = false;
  bool ml_bitwise_equal = false;

  std::optional<ComparisonTable> comparison;
  std::optional<double> empirical_min_supply;

  std::map<std::string, double> seconds;  // wall clock per stage; kept out of report.json
};

inline nlohmann::json relaxed_to_json(const cert::RelaxedIndices& r) {
  return {{"feasible", r.feasible},
          {"eps", r.eps},
          {"delta", r.delta},
          {"objective", r.objective},
          {"min_eig_ml", r.min_eig_ml},
          {"lambdas", r.multipliers.lambdas}};
}

inline nlohmann::json report_to_json(const RunReport& r) {
  using nlohmann::json;
  const auto ref = [](const std::optional<ArtifactRef>& a) {
    return a ? json{{"file", a->file}, {"sha256", a->sha256}} : json(nullptr);
  };
  const auto cert_summary = [](const std::optional<cert::Certificate>& c) {
    if (!c) return json(nullptr);
    return json{{"feasible", c->feasible}, {"eps", c->eps},           {"delta", c->delta},
                {"min_eig_ml", c->min_eig_ml}, {"lambdas", c->multipliers.lambdas}};
  };
  json j{{"status", r.status},
         {"failed_stage", r.failed_stage.empty() ? json(nullptr) : json(r.failed_stage)},
         {"message", r.message},
         {"config_digest", r.config_digest},
         {"baseline",
          {{"model", ref(r.baseline_model)},
           {"initial_loss", r.baseline_initial_loss},
           {"final_loss", r.baseline_final_loss},
           {"best_epoch", r.baseline_best_epoch},
           {"relaxed_indices", r.baseline_relaxed ? relaxed_to_json(*r.baseline_relaxed) : json(nullptr)}}},
         {"perturbed",
          {{"model", ref(r.perturbed_model)},
           {"certificate", ref(r.certificate)},
           {"certificate_summary", cert_summary(r.perturbed_certificate)},
           {"success", r.perturb_success},
           {"perturbation_norm", r.perturbation_norm},
           {"iterations", r.perturb_iterations},
           {"best_min_eig", r.perturb_best_min_eig},
           {"message", r.perturb_message}}},
         {"final",
          {{"model", ref(r.final_model)},
           {"certificate", ref(r.final_certificate)},
           {"certificate_summary", cert_summary(r.final_cert)},
           {"perturbed_d2_loss", r.perturbed_d2_loss},
           {"final_d2_loss", r.final_d2_loss},
           {"weights_preserved", r.weights_preserved},
           {"ml_bitwise_equal", r.ml_bitwise_equal}}},
         {"comparison", r.comparison ? comparison_to_json(*r.comparison) : json(nullptr)},
         {"empirical_min_supply", r.empirical_min_supply ? json(*r.empirical_min_supply) : json(nullptr)}};
  return j;
}

namespace internal {

inline std::string write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  os << text;
  if (!os) throw FormatError("write failed for " + path.string());
  return sha256_hex(text);
}

inline std::string trajectory_text(const sim::Trajectory& t) {
  std::ostringstream os;
  sim::write_trajectory_csv(os, t);
  return os.str();
}

}  // namespace internal

// Stages in order: baseline on D1, weight perturbation, bias retraining on D2 with
// the weights frozen, evaluation. Every artifact lands in `out_dir`. On a stage error the
// report is still written (status "failed") before StageFailure is thrown.
inline RunReport run_pipeline(const PipelineConfig& cfg, const std::filesystem::path& out_dir) {
  cfg.validate();
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "data");

  RunReport rep;
  rep.config_digest = config_digest(cfg);
  const std::map<std::string, std::string> meta{{"config_digest", rep.config_digest}};
  internal::write_text(out_dir / "config.json", config_to_json(cfg).dump(2) + "\n");

  const auto finish = [&]() {
    internal::write_text(out_dir / "report.json", report_to_json(rep).dump(2) + "\n");
    nlohmann::json t = rep.seconds;
    internal::write_text(out_dir / "timings.json", t.dump(2) + "\n");
  };
  const auto stage = [&](const std::string& name, auto&& body) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      body();
    } catch (const Error& e) {
      rep.seconds[name] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      rep.status = "failed";
      rep.failed_stage = name;
      rep.message = std::string(e.kind()) + ": " + e.what();
      finish();
      throw StageFailure(name, e.what());
    }
    rep.seconds[name] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  const auto save_model = [&](const std::string& file, const nn::Mlp& net) {
    return ArtifactRef{file, internal::write_text(out_dir / file, nn::model_to_string(net, meta))};
  };
  const auto save_cert = [&](const std::string& file, const cert::Certificate& c, const std::string& model_sha) {
    return ArtifactRef{file, internal::write_text(out_dir / file,
                                                  cert::certificate_to_string(c, {model_sha, rep.config_digest}))};
  };

  Datasets ds;
  stage("data", [&] {
    ds = build_datasets(cfg);
    for (std::size_t i = 0; i < ds.d1_trajectories.size(); ++i) {
      internal::write_text(out_dir / "data" / ("d1_trajectory_" + std::to_string(i) + ".csv"),
                           internal::trajectory_text(ds.d1_trajectories[i]));
      internal::write_text(out_dir / "data" / ("d2_trajectory_" + std::to_string(i) + ".csv"),
                           internal::trajectory_text(ds.d2_trajectories[i]));
    }
    internal::write_text(out_dir / "data" / "test_ground_truth.csv", internal::trajectory_text(ds.truth));
  });

  const cert::QsrFamily family = config_family(cfg);
  const mat::DenseMatrix p22 = cfg.p22();

  nn::Mlp baseline;
  stage("baseline", [&] {
    const nn::TrainResult tr = nn::train(initial_model(cfg), ds.d1, cfg.train_baseline);
    baseline = tr.net;
    rep.baseline_initial_loss = tr.initial_loss;
    rep.baseline_final_loss = tr.final_loss;
    rep.baseline_best_epoch = tr.best_epoch;
    rep.baseline_model = save_model("baseline.json", baseline);
    rep.baseline_relaxed = cert::relaxed_indices(baseline, p22, cfg.certificate.search, report_family(family));
  });

  perturb::PerturbResult pr;
  stage("perturb", [&] {
    perturb::SolverConfig scfg = cfg.solver;
    scfg.search = cfg.certificate.search;
    pr = perturb::perturb(baseline, family, p22, scfg);
    rep.perturb_success = pr.success;
    rep.perturbation_norm = pr.perturbation_norm;
    rep.perturb_iterations = pr.iterations;
    rep.perturb_best_min_eig = pr.best_min_eig;
    rep.perturb_message = pr.message;
    rep.perturbed_certificate = pr.certificate;
    rep.perturbed_model = save_model("perturbed.json", pr.net);
    rep.certificate = save_cert("certificate.json", pr.certificate, rep.perturbed_model->sha256);
    perturb::write_trace_csv(out_dir / "solver_trace.csv", pr.trace);
    if (!pr.success)
      throw SolverFailure("no certified weights: " + pr.message + " (best min_eig " + sim::format_double(pr.best_min_eig) +
                  ")");
  });

  nn::Mlp final_net;
  stage("retrain_bias", [&] {
    const nn::TrainResult tr = nn::train(pr.net, ds.d2, cfg.train_bias);
    final_net = tr.net;
    rep.perturbed_d2_loss = tr.initial_loss;
    rep.final_d2_loss = tr.final_loss;
    rep.weights_preserved = perturb::flatten_weights(final_net) == perturb::flatten_weights(pr.net);
    rep.final_model = save_model("final.json", final_net);

    cert::Certificate fc = pr.certificate;
    const mat::DenseMatrix ml2 = cert::certificate_matrix(pr.net, pr.certificate);
    const mat::DenseMatrix ml4 = cert::certificate_matrix(final_net, fc);
    rep.ml_bitwise_equal = ml2 == ml4;
    fc.min_eig_ml = mat::min_eig(ml4);
    fc.feasible = fc.min_eig_ml >= -fc.psd_tol && fc.eps >= 0.0 && fc.delta >= 0.0;
    rep.final_cert = fc;
    rep.final_certificate = save_cert("final_certificate.json", fc, rep.final_model->sha256);
    if (!rep.weights_preserved) throw Error("bias retraining changed a weight");
  });

  stage("evaluate", [&] {
    const std::size_t steps = ds.truth.size() - 1;
    rep.comparison = compare_models({{"baseline", baseline}, {"perturbed", pr.net}, {"final", final_net}},
                                    ds.test_z0, steps, ds.truth.dt, ds.truth);
    const auto pairs = cert::sample_model_trajectory_pairs(final_net, cfg.evaluation.empirical_pairs,
                                                           cfg.evaluation.empirical_samples,
                                                           cfg.evaluation.empirical_dt, cfg.evaluation.empirical_seed);
    rep.empirical_min_supply = cert::empirical_dissipativity(pairs, rep.final_cert->qsr);
  });

  rep.status = "ok";
  finish();
  return rep;
}

}  // namespace dnd::pipeline
