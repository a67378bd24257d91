#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"

#include "dnd/certkit/search.hpp"
#include "dnd/errors.hpp"
#include "dnd/neuralfield/model_json.hpp"

namespace dnd::cert {

inline constexpr const char* kCertificateFormat = "dnd-certificate";
inline constexpr int kCertificateVersion = 1;

inline nlohmann::json matrix_to_json(const DenseMatrix& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.entries()}};
}

inline DenseMatrix matrix_from_json(const nlohmann::json& j) {
  return DenseMatrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(), j.at("data").get<Vector>());
}

// Provenance strings are optional; an empty digest is written as null.
struct CertificateProvenance {
  std::string model_digest;
  std::string config_digest;
};

inline nlohmann::json certificate_to_json(const Certificate& c, const CertificateProvenance& prov = {}) {
  const auto opt = [](const std::string& s) { return s.empty() ? nlohmann::json(nullptr) : nlohmann::json(s); };
  return {{"format", kCertificateFormat},
          {"version", kCertificateVersion},
          {"feasible", c.feasible},
          {"strict_passivity_family", c.strict_passivity_family},
          {"qsr", {{"Q", matrix_to_json(c.qsr.q)}, {"S", matrix_to_json(c.qsr.s)}, {"R", matrix_to_json(c.qsr.r)}}},
          {"p22", matrix_to_json(c.p22)},
          {"multipliers", {{"lambda", c.multipliers.lambda}, {"lambdas", c.multipliers.lambdas}}},
          {"eps", c.eps},
          {"delta", c.delta},
          {"min_eig_ml", c.min_eig_ml},
          {"psd_tol", c.psd_tol},
          {"model_digest", opt(prov.model_digest)},
          {"config_digest", opt(prov.config_digest)}};
}

struct LoadedCertificate {
  Certificate certificate;
  CertificateProvenance provenance;
};

inline LoadedCertificate certificate_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kCertificateFormat) throw FormatError("certificate: unexpected format tag");
    if (j.at("version").get<int>() != kCertificateVersion) throw FormatError("certificate: unsupported version");
    LoadedCertificate out;
    Certificate& c = out.certificate;
    c.feasible = j.at("feasible").get<bool>();
    c.strict_passivity_family = j.at("strict_passivity_family").get<bool>();
    const auto& q = j.at("qsr");
    c.qsr = {matrix_from_json(q.at("Q")), matrix_from_json(q.at("S")), matrix_from_json(q.at("R"))};
    c.qsr.validate();
    c.p22 = matrix_from_json(j.at("p22"));
    c.multipliers.lambda = j.at("multipliers").at("lambda").get<double>();
    c.multipliers.lambdas = j.at("multipliers").at("lambdas").get<std::vector<double>>();
    c.eps = j.at("eps").get<double>();
    c.delta = j.at("delta").get<double>();
    c.min_eig_ml = j.at("min_eig_ml").get<double>();
    c.psd_tol = j.at("psd_tol").get<double>();
    const auto str = [&](const char* key) {
      return j.contains(key) && !j.at(key).is_null() ? j.at(key).get<std::string>() : std::string{};
    };
    out.provenance = {str("model_digest"), str("config_digest")};
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("certificate: malformed json: ") + e.what());
  } catch (const ContractViolation& e) {
    throw FormatError(std::string("certificate: invalid contents: ") + e.what());
  }
}

inline std::string certificate_to_string(const Certificate& c, const CertificateProvenance& prov = {}) {
  return certificate_to_json(c, prov).dump(2) + "\n";
}

inline std::string save_certificate(const std::filesystem::path& path, const Certificate& c,
                                    const CertificateProvenance& prov = {}) {
  const std::string text = certificate_to_string(c, prov);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  os << text;
  return sha256_hex(text);
}

inline LoadedCertificate load_certificate(const std::filesystem::path& path) {
  const std::string text = nn::read_text_file(path);
  try {
    return certificate_from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// Recomputes M_L for `net` and checks the stored verdict. Refuses a certificate whose model
// digest does not match `model_digest` when both are present.
inline bool reverify(const nn::Mlp& net, const LoadedCertificate& lc, const std::string& model_digest = {}) {
  if (!model_digest.empty() && !lc.provenance.model_digest.empty() && model_digest != lc.provenance.model_digest)
    throw ContractViolation("certificate was issued for a different model (digest mismatch)");
  const Certificate& c = lc.certificate;
  const double me = mat::min_eig(certificate_matrix(net, c));
  return me >= -c.psd_tol && c.eps >= 0.0 && c.delta >= 0.0;
}

}  // namespace dnd::cert
