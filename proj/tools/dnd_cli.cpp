#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dnd.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dnd;

namespace {

struct Options {
  std::string config;
  std::string out = ".";
  std::vector<std::string> models;
  std::string qsr;
  std::optional<double> p22;
  std::optional<std::uint64_t> seed;
  std::string profile = "desk";
};

// Exit codes: 0 success, 1 runtime error, 2 usage error.
int fail(const std::string& kind, const std::string& message, int code = 1) {
  std::cerr << json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << "\n";
  return code;
}

pipeline::PipelineConfig effective_config(const Options& o) {
  pipeline::PipelineConfig cfg =
      o.config.empty() ? pipeline::profile_config(o.profile) : pipeline::load_config(o.config, o.profile);
  if (o.seed) cfg.architecture.init_seed = *o.seed;
  if (!o.qsr.empty()) cfg.certificate.qsr = pipeline::qsr_json_from_string(o.qsr);
  if (o.p22) cfg.certificate.p22_scale = *o.p22;
  cfg.validate();
  return cfg;
}

std::string write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  return pipeline::internal::write_text(path, text);
}

// Loads the single --model file and refuses it when an explicit --config disagrees with the
// config digest recorded in the model.
nn::LoadedModel single_model(const Options& o, const std::string& digest) {
  if (o.models.size() != 1) throw ContractViolation("exactly one --model is required");
  nn::LoadedModel lm = nn::load_model(o.models.front());
  const auto it = lm.metadata.find("config_digest");
  if (!o.config.empty() && it != lm.metadata.end() && it->second != digest)
    throw ContractViolation("model " + o.models.front() + " was produced under a different config (digest " +
                            it->second + ", current " + digest + ")");
  return lm;
}

json certificate_line(const cert::Certificate& c) {
  return {{"feasible", c.feasible},   {"min_eig_ml", c.min_eig_ml}, {"eps", c.eps},
          {"delta", c.delta},         {"lambdas", c.multipliers.lambdas}};
}

int run_simulate(const Options& o) {
  const auto cfg = effective_config(o);
  const auto ds = pipeline::build_datasets(cfg);
  const fs::path out = o.out;
  const std::string digest = pipeline::config_digest(cfg);
  json files = json::array();
  const auto emit = [&](const std::string& name, const sim::Trajectory& t) {
    write_text(out / name, pipeline::internal::trajectory_text(t));
    files.push_back(name);
  };
  for (std::size_t i = 0; i < ds.d1_trajectories.size(); ++i) {
    emit("d1_trajectory_" + std::to_string(i) + ".csv", ds.d1_trajectories[i]);
    emit("d2_trajectory_" + std::to_string(i) + ".csv", ds.d2_trajectories[i]);
  }
  emit("test_ground_truth.csv", ds.truth);
  std::cout << json{{"config_digest", digest}, {"files", files}}.dump() << "\n";
  return 0;
}

int run_train_baseline(const Options& o) {
  const auto cfg = effective_config(o);
  const std::string digest = pipeline::config_digest(cfg);
  const auto ds = pipeline::build_datasets(cfg);
  const nn::TrainResult tr = nn::train(pipeline::initial_model(cfg), ds.d1, cfg.train_baseline);
  const fs::path path = fs::path(o.out) / "baseline.json";
  fs::create_directories(o.out);
  const std::string sha = nn::save_model(path, tr.net, {{"config_digest", digest}});
  std::cout << json{{"model", path.string()},
                    {"sha256", sha},
                    {"initial_loss", tr.initial_loss},
                    {"final_loss", tr.final_loss},
                    {"best_epoch", tr.best_epoch}}
                   .dump()
            << "\n";
  return 0;
}

int run_verify(const Options& o) {
  const auto cfg = effective_config(o);
  const std::string digest = pipeline::config_digest(cfg);
  const nn::LoadedModel lm = single_model(o, digest);
  const cert::Certificate c =
      cert::verify(lm.net, pipeline::config_family(cfg), cfg.p22(), cfg.certificate.search);
  const std::string model_sha = sha256_hex(nn::model_to_string(lm.net, lm.metadata));
  const fs::path path = fs::path(o.out) / "certificate.json";
  fs::create_directories(o.out);
  cert::save_certificate(path, c, {model_sha, digest});
  json line = certificate_line(c);
  line["certificate"] = path.string();
  std::cout << line.dump() << "\n";
  return 0;
}

int run_perturb(const Options& o) {
  const auto cfg = effective_config(o);
  const std::string digest = pipeline::config_digest(cfg);
  const nn::LoadedModel lm = single_model(o, digest);
  perturb::SolverConfig scfg = cfg.solver;
  scfg.search = cfg.certificate.search;
  const perturb::PerturbResult pr = perturb::perturb(lm.net, pipeline::config_family(cfg), cfg.p22(), scfg);
  const fs::path out = o.out;
  fs::create_directories(out);
  const std::string sha = nn::save_model(out / "perturbed.json", pr.net, {{"config_digest", digest}});
  cert::save_certificate(out / "certificate.json", pr.certificate, {sha, digest});
  perturb::write_trace_csv(out / "solver_trace.csv", pr.trace);
  if (!pr.success)
    throw SolverFailure("perturbation failed: " + pr.message + " (best min_eig " +
                        sim::format_double(pr.best_min_eig) + ")");
  json line = certificate_line(pr.certificate);
  line["perturbation_norm"] = pr.perturbation_norm;
  line["iterations"] = pr.iterations;
  std::cout << line.dump() << "\n";
  return 0;
}

int run_retrain_bias(const Options& o) {
  const auto cfg = effective_config(o);
  const std::string digest = pipeline::config_digest(cfg);
  const nn::LoadedModel lm = single_model(o, digest);
  const auto ds = pipeline::build_datasets(cfg);
  const nn::TrainResult tr = nn::train(lm.net, ds.d2, cfg.train_bias);
  if (perturb::flatten_weights(tr.net) != perturb::flatten_weights(lm.net))
    throw Error("bias retraining changed a weight");
  const fs::path path = fs::path(o.out) / "final.json";
  fs::create_directories(o.out);
  const std::string sha = nn::save_model(path, tr.net, {{"config_digest", digest}});
  std::cout << json{{"model", path.string()},
                    {"sha256", sha},
                    {"initial_loss", tr.initial_loss},
                    {"final_loss", tr.final_loss}}
                   .dump()
            << "\n";
  return 0;
}

int run_pipeline_cmd(const Options& o) {
  const auto cfg = effective_config(o);
  const pipeline::RunReport rep = pipeline::run_pipeline(cfg, o.out);
  json line{{"status", rep.status}, {"report", (fs::path(o.out) / "report.json").string()}};
  if (rep.perturbed_certificate) line["certificate"] = certificate_line(*rep.perturbed_certificate);
  line["perturbation_norm"] = rep.perturbation_norm;
  std::cout << line.dump() << "\n";
  return 0;
}

int run_compare(const Options& o) {
  const auto cfg = effective_config(o);
  if (o.models.empty()) throw ContractViolation("compare needs at least one --model");
  std::vector<std::pair<std::string, nn::Mlp>> models;
  std::map<std::string, int> seen;
  for (const std::string& path : o.models) {
    std::string name = fs::path(path).stem().string();
    if (seen[name]++) name = path;
    models.emplace_back(name, nn::load_model(path).net);
  }
  const auto [z0, truth] = pipeline::test_ground_truth(cfg, cfg.train_baseline.dt);
  const auto table = pipeline::compare_models(models, z0, truth.size() - 1, truth.dt, truth);
  const std::string text = pipeline::comparison_to_json(table).dump(2) + "\n";
  write_text(fs::path(o.out) / "comparison.json", text);
  std::cout << pipeline::comparison_to_json(table).dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dissipative neural dynamics: simulate, train, certify, perturb."};
  app.require_subcommand(1);
  Options o;

  const auto common = [&](CLI::App* sub, bool model, bool repeat_model) {
    sub->add_option("--config", o.config, "JSON configuration file")->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--profile", o.profile, "built-in profile")->check(CLI::IsMember({"desk", "paper"}));
    sub->add_option("--seed", o.seed, "override the weight-initialisation seed");
    sub->add_option("--qsr", o.qsr, "QSR family, e.g. strict_passivity_family, passivity, l2_gain:2");
    sub->add_option("--p22", o.p22, "P22 scale (P22 = -scale I)")->check(CLI::PositiveNumber);
    if (model) {
      auto* opt = sub->add_option("--model", o.models, "model JSON file")->check(CLI::ExistingFile)->required();
      if (!repeat_model) opt->expected(1);
    }
  };

  std::map<std::string, int (*)(const Options&)> handlers{
      {"simulate", run_simulate},   {"train-baseline", run_train_baseline}, {"verify", run_verify},
      {"perturb", run_perturb},     {"retrain-bias", run_retrain_bias},     {"pipeline", run_pipeline_cmd},
      {"compare", run_compare}};
  common(app.add_subcommand("simulate", "write D1, D2 and the test ground truth as CSV"), false, false);
  common(app.add_subcommand("train-baseline", "train all parameters on D1"), false, false);
  common(app.add_subcommand("verify", "certify a model and write certificate.json"), true, false);
  common(app.add_subcommand("perturb", "move the weights onto the certified set"), true, false);
  common(app.add_subcommand("retrain-bias", "retrain biases on D2 with frozen weights"), true, false);
  common(app.add_subcommand("pipeline", "run every stage and write report.json"), false, false);
  common(app.add_subcommand("compare", "score models against the held-out ground truth"), true, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage_error", e.what(), 2);
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    return handlers.at(name)(o);
  } catch (const pipeline::StageFailure& e) {
    std::cerr << json{{"error", {{"kind", e.kind()}, {"stage", e.stage()}, {"message", e.what()}}}}.dump() << "\n";
    return 1;
  } catch (const Error& e) {
    return fail(e.kind(), e.what());
  } catch (const std::exception& e) {
    return fail("io_error", e.what());
  }
}
