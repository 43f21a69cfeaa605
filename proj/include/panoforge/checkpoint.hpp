// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>

#include "panoforge/denoiser.hpp"

namespace panoforge {

/// Writes `directory/manifest.json` (config, tensor names and shapes) and one
/// PNC1 blob per tensor. Values are narrowed to float32.
void save_checkpoint(const std::filesystem::path& directory, const DenoiserWeights& weights);

/// Throws IoError for unreadable files and ConfigError when the manifest does
/// not match the architecture its config describes.
DenoiserWeights load_checkpoint(const std::filesystem::path& directory);

}  // namespace panoforge
