#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "json.hpp"

#include "dnd/digest.hpp"
#include "dnd/errors.hpp"
#include "dnd/neuralfield/mlp.hpp"

namespace dnd::nn {

inline constexpr const char* kModelFormat = "dnd-model";
inline constexpr int kModelVersion = 1;

// Doubles are written with nlohmann's shortest round-trip formatting, so save/load is
// bit-exact for every finite value.
inline nlohmann::json activation_to_json(const Activation& a) {
  nlohmann::json j{{"kind", to_string(a.kind)}, {"alpha", a.alpha()}, {"beta", a.beta()}};
  if (a.kind == ActivationKind::leaky_relu) j["leak"] = a.leak;
  return j;
}

inline Activation activation_from_json(const nlohmann::json& j) {
  const ActivationKind kind = activation_kind_from_string(j.at("kind").get<std::string>());
  if (kind == ActivationKind::leaky_relu) return Activation::leaky_relu(j.at("leak").get<double>());
  return Activation{kind, 0.0};
}

inline nlohmann::json model_to_json(const Mlp& net, const std::map<std::string, std::string>& metadata = {}) {
  nlohmann::json layers = nlohmann::json::array();
  for (const Layer& l : net.layers()) {
    if (!l.weight.all_finite()) throw DataError("model_to_json: non-finite weight");
    layers.push_back({{"rows", l.weight.rows()},
                      {"cols", l.weight.cols()},
                      {"activation", activation_to_json(l.activation)},
                      {"weights", l.weight.entries()},
                      {"bias", l.bias}});
  }
  return {{"format", kModelFormat},
          {"version", kModelVersion},
          {"layer_dims", net.dims()},
          {"layers", std::move(layers)},
          {"metadata", metadata}};
}

struct LoadedModel {
  Mlp net;
  std::map<std::string, std::string> metadata;
};

inline LoadedModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kModelFormat) throw FormatError("model: unexpected format tag");
    if (j.at("version").get<int>() != kModelVersion)
      throw FormatError("model: unsupported format version " + std::to_string(j.at("version").get<int>()));
    std::vector<Layer> layers;
    for (const auto& jl : j.at("layers")) {
      const auto rows = jl.at("rows").get<std::size_t>();
      const auto cols = jl.at("cols").get<std::size_t>();
      layers.push_back({DenseMatrix(rows, cols, jl.at("weights").get<Vector>()), jl.at("bias").get<Vector>(),
                        activation_from_json(jl.at("activation"))});
    }
    LoadedModel out{Mlp(std::move(layers)), {}};
    if (out.net.dims() != j.at("layer_dims").get<std::vector<std::size_t>>())
      throw FormatError("model: layer_dims disagree with the layer shapes");
    if (j.contains("metadata")) out.metadata = j.at("metadata").get<std::map<std::string, std::string>>();
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model: malformed json: ") + e.what());
  } catch (const ContractViolation& e) {
    throw FormatError(std::string("model: invalid network: ") + e.what());
  }
}

inline std::string model_to_string(const Mlp& net, const std::map<std::string, std::string>& metadata = {}) {
  return model_to_json(net, metadata).dump(2) + "\n";
}

// Writes the model and returns the SHA-256 of the written text.
inline std::string save_model(const std::filesystem::path& path, const Mlp& net,
                              const std::map<std::string, std::string>& metadata = {}) {
  const std::string text = model_to_string(net, metadata);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  os << text;
  return sha256_hex(text);
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline LoadedModel load_model(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  try {
    return model_from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace dnd::nn
