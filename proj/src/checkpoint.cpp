// SPDX-License-Identifier: Apache-2.0
#include "panoforge/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "json_config.hpp"
#include "panoforge/tensor_io.hpp"

namespace panoforge {

using detail::json;

void save_checkpoint(const std::filesystem::path& directory, const DenoiserWeights& weights) {
  std::error_code ec;
  std::filesystem::create_directories(directory, ec);
  if (ec) throw IoError("cannot create " + directory.string() + ": " + ec.message());
  json tensors = json::array();
  for (const auto& [name, tensor] : weights.params) {
    const std::string file = name + ".pnc1";
    write_pnc1(directory / file, tensor);
    tensors.push_back({{"name", name}, {"shape", tensor.shape()}, {"file", file}});
  }
  json manifest{{"format", "panoforge-checkpoint"},
                {"config", detail::denoiser_config_to_json(weights.config)},
                {"tensors", tensors}};
  std::ofstream out(directory / "manifest.json");
  out << manifest.dump(2) << '\n';
  if (!out) throw IoError("cannot write " + (directory / "manifest.json").string());
}

DenoiserWeights load_checkpoint(const std::filesystem::path& directory) {
  const auto manifest_path = directory / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open " + manifest_path.string());
  std::stringstream text;
  text << in.rdbuf();
  json manifest;
  try {
    manifest = json::parse(text.str());
  } catch (const json::parse_error& e) {
    throw ConfigError(manifest_path.string() + ": " + e.what());
  }
  if (!manifest.is_object() || !manifest.contains("config") || !manifest.contains("tensors")) {
    throw ConfigError(manifest_path.string() + ": missing config or tensors");
  }
  DenoiserWeights weights;
  weights.config = detail::denoiser_config_from_json(manifest["config"], DenoiserConfig{}, "config");
  const auto expected = DenoiserWeights::layout(weights.config);
  for (const json& entry : manifest["tensors"]) {
    std::string name, file;
    std::vector<std::size_t> shape;
    try {
      name = entry.at("name").get<std::string>();
      file = entry.at("file").get<std::string>();
      shape = entry.at("shape").get<std::vector<std::size_t>>();
    } catch (const json::exception&) {
      throw ConfigError(manifest_path.string() + ": malformed tensor entry");
    }
    auto it = expected.find(name);
    if (it == expected.end()) throw ConfigError("checkpoint has unexpected tensor " + name);
    if (it->second != shape) throw ConfigError("checkpoint tensor " + name + " has shape " + shape_string(shape));
    Tensor t = to_tensor(read_pnc1(directory / file));
    if (t.shape() != shape) throw ConfigError("blob for " + name + " has shape " + shape_string(t.shape()));
    weights.params.emplace(name, std::move(t));
  }
  for (const auto& [name, shape] : expected) {
    if (!weights.params.count(name)) throw ConfigError("checkpoint is missing tensor " + name);
  }
  return weights;
}

}  // namespace panoforge
