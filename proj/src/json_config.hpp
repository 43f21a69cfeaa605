// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "json.hpp"
#include "panoforge/denoiser.hpp"
#include "panoforge/error.hpp"

namespace panoforge::detail {

using nlohmann::json;

template <typename T>
T read_field(const json& object, const char* key, const T& fallback, const std::string& where) {
  if (!object.contains(key)) return fallback;
  try {
    return object.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

inline json denoiser_config_to_json(const DenoiserConfig& c) {
  return json{{"base_channels", c.base_channels},   {"levels", c.levels},
              {"blocks_per_level", c.blocks_per_level}, {"attention_from_level", c.attention_from_level},
              {"heads", c.heads},                   {"latent_channels", c.latent_channels},
              {"condition_channels", c.condition_channels}, {"control_channels", c.control_channels},
              {"text_dim", c.text_dim},             {"groups", c.groups}};
}

inline DenoiserConfig denoiser_config_from_json(const json& j, const DenoiserConfig& base, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  DenoiserConfig c = base;
  c.base_channels = read_field(j, "base_channels", c.base_channels, where);
  c.levels = read_field(j, "levels", c.levels, where);
  c.blocks_per_level = read_field(j, "blocks_per_level", c.blocks_per_level, where);
  c.attention_from_level = read_field(j, "attention_from_level", c.attention_from_level, where);
  c.heads = read_field(j, "heads", c.heads, where);
  c.latent_channels = read_field(j, "latent_channels", c.latent_channels, where);
  c.condition_channels = read_field(j, "condition_channels", c.condition_channels, where);
  c.control_channels = read_field(j, "control_channels", c.control_channels, where);
  c.text_dim = read_field(j, "text_dim", c.text_dim, where);
  c.groups = read_field(j, "groups", c.groups, where);
  c.validate();
  return c;
}

}  // namespace panoforge::detail
