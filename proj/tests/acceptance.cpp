// Acceptance run: one PASS/FAIL line per criterion, INFO lines for the supplementary run.
// Usage: acceptance <work-dir>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>

#include "dnd.hpp"
#include "support.hpp"

using namespace dnd;
using cert::Multipliers;
using cert::PBlocks;
using mat::DenseMatrix;
using nlohmann::json;
using nn::Activation;
using nn::Mlp;
using sim::Vector;
namespace fs = std::filesystem;
namespace ts = testing_support;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, double budget_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = budget_s <= 0.0 || secs < budget_s;
  const bool pass = o.pass && in_time;
  if (!pass) ++failures;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", secs);
  std::cout << "criterion " << id << ": " << (pass ? "PASS" : "FAIL") << "  " << o.detail << "  [" << buf << " s"
            << (budget_s > 0.0 ? (in_time ? "" : ", over budget") : "") << "]" << std::endl;
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

Activation activation_by_index(int i) {
  switch (i) {
    case 0: return Activation::relu();
    case 1: return Activation::leaky_relu(0.2);
    case 2: return Activation::tanh();
    case 3: return Activation::sigmoid();
    default: return Activation::identity();
  }
}

Outcome slope_suite() {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> d(-10.0, 10.0);
  double worst = -std::numeric_limits<double>::infinity();
  for (int a = 0; a < 5; ++a) {
    const Activation act = activation_by_index(a);
    for (int k = 0; k < 100000; ++k) worst = std::max(worst, cert::slope_quadratic(Vector{d(rng)}, Vector{d(rng)}, act));
  }
  return {worst <= 1e-12, "max slope_quadratic " + num(worst) + " over 5 x 1e5 pairs (tol 1e-12)"};
}

Outcome assembly_identity() {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> width(1, 8);
  std::uniform_real_distribution<double> lam(0.1, 3.0);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n0 = width(rng);
    std::vector<std::size_t> dims{n0};
    const std::size_t hidden = 1 + static_cast<std::size_t>(trial % 3);
    for (std::size_t h = 0; h < hidden; ++h) dims.push_back(width(rng));
    dims.push_back(n0);
    const Mlp net = ts::random_net(dims, ts::random_activation(rng), rng);
    const DenseMatrix p12 = ts::random_matrix(n0, n0, rng);
    const PBlocks pb{ts::random_symmetric(n0, rng), p12, p12.transpose(), ts::random_symmetric(n0, rng)};
    const Multipliers m{lam(rng), ts::random_multipliers(net.num_layers(), rng)};
    const DenseMatrix diff = cert::build_ml(net, pb, m) - (cert::build_pl(pb, net.dims()) + cert::build_st(net, m) * m.lambda);
    for (double v : diff.data()) worst = std::max(worst, std::abs(v));
  }
  return {worst <= 1e-14, "max |M_L - (P_L + lambda S_T)| " + num(worst) + " over 200 nets (tol 1e-14)"};
}

Outcome lemma1_oracle() {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> io(1, 6), hid(1, 8);
  int certified = 0, attempts = 0;
  double worst = std::numeric_limits<double>::infinity();
  while (certified < 100 && attempts < 100000) {
    ++attempts;
    const std::size_t n0 = io(rng);
    const Mlp net = ts::random_net({n0, hid(rng), n0}, ts::random_activation(rng), rng, 0.4);
    const PBlocks pb{DenseMatrix::identity(n0, 2.0), DenseMatrix(n0, n0), DenseMatrix(n0, n0),
                     DenseMatrix::identity(n0, -0.05)};
    const Multipliers m{1.0, {1.0, 1.0}};
    if (mat::min_eig(cert::build_ml(net, pb, m)) < 0.0) continue;
    ++certified;
    for (int k = 0; k < 1000; ++k) {
      const Vector a = ts::random_vector(n0, rng, 3.0), b = ts::random_vector(n0, rng, 3.0);
      worst = std::min(worst, cert::lemma1_quadratic(net, a, b, pb));
    }
  }
  return {certified == 100 && worst >= -1e-8,
          std::to_string(certified) + " certified nets, min lemma1_quadratic " + num(worst) + " (tol -1e-8)"};
}

Outcome s_procedure_sampling() {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> lam(0.0, 2.0);
  int held = 0, violations = 0;
  while (held < 500) {
    const std::size_t n = 2 + static_cast<std::size_t>(held % 5);
    const DenseMatrix f1 = ts::random_symmetric(n, rng);
    const double l = lam(rng);
    const DenseMatrix f0 = f1 * l + mat::gram(ts::random_matrix(n, n, rng, 0.5)) + ts::random_symmetric(n, rng, 0.05);
    if (!cert::s_procedure_holds(f0, f1, l)) continue;
    ++held;
    for (int k = 0; k < 1000; ++k) {
      const Vector z = ts::random_vector(n, rng);
      if (mat::quadratic_form(f1, z) >= 0.0 && mat::quadratic_form(f0, z) < -1e-9) ++violations;
    }
  }
  return {violations == 0, std::to_string(held) + " triples, " + std::to_string(violations) + " violating samples"};
}

Outcome gradient_check() {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> io(1, 3), hid(2, 5);
  const double h = 1e-6;
  double worst = 0.0;
  std::size_t params = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Activation act = trial % 3 == 0 ? Activation::tanh() : trial % 3 == 1 ? Activation::sigmoid() : Activation::identity();
    const std::size_t n = io(rng);
    const Mlp net = ts::random_net({n, hid(rng), n}, act, rng);
    const std::size_t horizon = 6;
    std::vector<nn::Window> windows(3);
    for (auto& w : windows)
      for (std::size_t k = 0; k <= horizon; ++k) w.push_back(ts::random_vector(n, rng));
    const auto lg = nn::loss_and_gradient(net, windows, horizon, 0.05, nn::TrainableMask::all);
    const Vector analytic = nn::flatten(lg.gradient);
    Vector p = nn::flatten_parameters(net);
    for (std::size_t i = 0; i < p.size(); ++i, ++params) {
      const double keep = p[i];
      p[i] = keep + h;
      const double up = nn::batch_loss(nn::with_parameters(net, p), windows, horizon, 0.05);
      p[i] = keep - h;
      const double down = nn::batch_loss(nn::with_parameters(net, p), windows, horizon, 0.05);
      p[i] = keep;
      const double fd = (up - down) / (2.0 * h);
      worst = std::max(worst, std::abs(fd - analytic[i]) / std::max({std::abs(fd), std::abs(analytic[i]), 1e-6}));
    }
  }
  return {worst < 1e-4, "max relative error " + num(worst) + " over " + std::to_string(params) + " parameters (tol 1e-4)"};
}

Outcome integrator_accuracy() {
  const auto decay = [](double, std::span<const double> z) { return Vector{-z[0]}; };
  const auto err = [&](double dt) {
    return std::abs(sim::integrate_rk4(decay, {1.0}, 0.0, 1.0, dt).back()[0] - std::exp(-1.0));
  };
  const double e = err(1e-3);
  const double ratio = err(0.02) / err(0.01);
  return {e < 1e-8 && ratio >= 12.0 && ratio <= 20.0,
          "final error " + num(e) + " (tol 1e-8), halving ratio " + num(ratio) + " (want [12, 20])"};
}

struct Run {
  json report;
  bool completed = false;
  std::string failure;
};

Run run(const pipeline::PipelineConfig& cfg, const fs::path& dir) {
  fs::remove_all(dir);
  Run r;
  try {
    pipeline::run_pipeline(cfg, dir);
    r.completed = true;
  } catch (const pipeline::StageFailure& e) {
    r.failure = e.what();
  }
  r.report = json::parse(slurp(dir / "report.json"));
  return r;
}

// 7(i)-(iv) for a pipeline run; returns the overall verdict.
Outcome end_to_end(const Run& r) {
  std::string d;
  const json& rep = r.report;
  bool ok = r.completed;
  if (!r.completed) d += "pipeline aborted (" + r.failure + "); ";

  const json& cs = rep.at("final").at("certificate_summary");
  if (!cs.is_null()) {
    const double me = cs.at("min_eig_ml"), eps = cs.at("eps"), delta = cs.at("delta");
    const bool i = me >= -1e-9 && eps >= 0.0 && delta >= 0.0;
    ok = ok && i;
    d += std::string("(i) ") + (i ? "ok" : "no") + " min_eig " + num(me) + " eps " + num(eps) + " delta " + num(delta);
  } else {
    ok = false;
    const json& ps = rep.at("perturbed");
    d += "(i) no certificate, best min_eig " + num(ps.at("best_min_eig"));
  }

  const double norm = rep.at("perturbed").at("perturbation_norm");
  const bool ii = rep.at("perturbed").at("success").get<bool>() && norm <= 10.0;
  ok = ok && ii;
  d += std::string("; (ii) ") + (ii ? "ok" : "no") + " norm " + num(norm);

  const json& cmp = rep.at("comparison");
  if (!cmp.is_null() && cmp.at("models").at("final").contains("rmse_total") &&
      cmp.at("models").at("baseline").contains("rmse_total")) {
    const double f = cmp.at("models").at("final").at("rmse_total"), b = cmp.at("models").at("baseline").at("rmse_total");
    const bool iii = f <= 2.0 * b;
    ok = ok && iii;
    d += std::string("; (iii) ") + (iii ? "ok" : "no") + " rmse final " + num(f) + " baseline " + num(b);
  } else {
    ok = false;
    d += "; (iii) not reached";
  }

  const bool iv = rep.at("final").at("ml_bitwise_equal").get<bool>();
  ok = ok && iv;
  d += std::string("; (iv) ") + (iv ? "ok" : r.completed ? "no" : "not reached");
  return {ok, d};
}

Outcome relaxed_report(const Run& r) {
  const json& ri = r.report.at("baseline").at("relaxed_indices");
  if (ri.is_null()) return {false, "relaxed indices missing from report"};
  const double eps = ri.at("eps"), delta = ri.at("delta");
  const double norm = r.report.at("perturbed").at("perturbation_norm");
  const bool both = eps >= 0.0 && delta >= 0.0;
  const bool consistent = !both || norm == 0.0;
  return {consistent, "baseline eps " + num(eps) + " delta " + num(delta) + " objective " + num(ri.at("objective")) +
                          (both ? ", perturbation norm " + num(norm) : ", indices negative")};
}

// The sampling runs inside the evaluate stage; its recorded time is held to the budget.
Outcome empirical(const Run& r, const fs::path& dir) {
  const json& s = r.report.at("empirical_min_supply");
  if (s.is_null()) return {false, "no certified final model to sample"};
  const double v = s;
  const double secs = json::parse(slurp(dir / "timings.json")).at("evaluate");
  return {v >= -1e-6 && secs < 60.0,
          "min supply " + num(v) + " over 20 pairs x 1000 samples (tol -1e-6), evaluate stage " + num(secs) + " s"};
}

Outcome determinism(const fs::path& a, const fs::path& b) {
  std::size_t files = 0;
  std::string diff;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file() || e.path().filename() == "timings.json") continue;
    ++files;
    const fs::path rel = fs::relative(e.path(), a);
    if (!fs::exists(b / rel) || slurp(e.path()) != slurp(b / rel)) diff += " " + rel.string();
  }
  for (const auto& e : fs::recursive_directory_iterator(b))
    if (e.is_regular_file() && !fs::exists(a / fs::relative(e.path(), b))) diff += " " + fs::relative(e.path(), b).string();
  return {diff.empty() && files > 0,
          diff.empty() ? std::to_string(files) + " artifact files identical" : "differing files:" + diff};
}

pipeline::PipelineConfig supplementary_config() {
  json j = pipeline::config_to_json(pipeline::profile_config("desk"));
  j["certificate"]["qsr"] = {{"kind", "matrices"},
                             {"Q", {{1.0, 0.0}, {0.0, 1.0}}},
                             {"S", {{0.5, 0.0}, {0.0, 0.5}}},
                             {"R", {{1.0, 0.0}, {0.0, 1.0}}}};
  j["certificate"]["search"]["lambda_min"] = 1e-5;
  j["certificate"]["search"]["lambda_max"] = 1e5;
  j["solver"]["max_iterations"] = 400;
  return pipeline::config_from_json(j);
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "dnd_acceptance";
  fs::create_directories(work);

  report(1, 10.0, slope_suite);
  report(2, 10.0, assembly_identity);
  report(3, 60.0, lemma1_oracle);
  report(4, 30.0, s_procedure_sampling);
  report(5, 60.0, gradient_check);
  report(6, 5.0, integrator_accuracy);

  const pipeline::PipelineConfig cfg = pipeline::profile_config("desk");
  Run first;
  report(7, 900.0, [&] {
    first = run(cfg, work / "desk_a");
    return end_to_end(first);
  });
  report(8, 0.0, [&] { return relaxed_report(first); });
  report(9, 0.0, [&] { return empirical(first, work / "desk_a"); });
  report(10, 0.0, [&] {
    run(cfg, work / "desk_b");
    return determinism(work / "desk_a", work / "desk_b");
  });

  // The same recipe under a supply with a positive definite P11, which the certificate can reach.
  const Run sup = run(supplementary_config(), work / "supplementary");
  const Outcome s7 = end_to_end(sup), s9 = empirical(sup, work / "supplementary");
  std::cout << "INFO supplementary 7: " << (s7.pass ? "pass" : "fail") << "  " << s7.detail << std::endl;
  std::cout << "INFO supplementary 9: " << (s9.pass ? "pass" : "fail") << "  " << s9.detail << std::endl;

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
