#pragma once

#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "qapm/diffcore.hpp"

namespace qapm::ad {

inline constexpr const char* kCheckpointFormat = "qapm-checkpoint";
inline constexpr int kCheckpointVersion = 1;

using TensorMap = std::map<std::string, Tensor>;

/// {"shape":[rows,cols],"data":[row-major values]}
inline nlohmann::json tensor_to_json(const Tensor& t) {
  nlohmann::json data = nlohmann::json::array();
  for (Eigen::Index i = 0; i < t.rows(); ++i) {
    for (Eigen::Index j = 0; j < t.cols(); ++j) data.push_back(t(i, j));
  }
  return {{"shape", {t.rows(), t.cols()}}, {"data", std::move(data)}};
}

inline Tensor tensor_from_json(const nlohmann::json& j) {
  const auto shape = j.at("shape").get<std::vector<Eigen::Index>>();
  if (shape.size() != 2) throw ConfigError("checkpoint tensors must be two-dimensional");
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != shape[0] * shape[1]) {
    throw ConfigError("checkpoint tensor data length does not match its shape");
  }
  Tensor t(shape[0], shape[1]);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < t.rows(); ++i) {
    for (Eigen::Index j2 = 0; j2 < t.cols(); ++j2) t(i, j2) = data[k++].get<double>();
  }
  return t;
}

/// Versioned checkpoint document: named tensors plus an opaque config blob.
inline nlohmann::json checkpoint_to_json(const TensorMap& tensors, const nlohmann::json& config) {
  nlohmann::json ts = nlohmann::json::object();
  for (const auto& [name, t] : tensors) ts[name] = tensor_to_json(t);
  return {{"format", kCheckpointFormat}, {"version", kCheckpointVersion}, {"config", config}, {"tensors", ts}};
}

inline std::pair<TensorMap, nlohmann::json> checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("format", std::string()) != kCheckpointFormat) throw ConfigError("not a qapm checkpoint");
  if (j.value("version", 0) != kCheckpointVersion) {
    throw ConfigError("unsupported checkpoint version " + std::to_string(j.value("version", 0)));
  }
  TensorMap out;
  for (const auto& [name, t] : j.at("tensors").items()) out[name] = tensor_from_json(t);
  return {std::move(out), j.at("config")};
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << j.dump() << '\n';
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  return nlohmann::json::parse(in);
}

}  // namespace qapm::ad
