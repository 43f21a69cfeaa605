// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "panoforge/codec.hpp"
#include "panoforge/denoiser.hpp"
#include "panoforge/diffusion.hpp"
#include "panoforge/layout.hpp"
#include "panoforge/scene.hpp"

namespace panoforge {

enum class SrMode { none, resize, plugin };

SrMode parse_sr_mode(std::string_view text);
std::string_view to_string(SrMode mode);

struct RunConfig {
  std::size_t width = 512;   // per view, before super-resolution
  std::size_t height = 256;
  std::size_t frames = 8;
  std::size_t ddim_steps = 25;
  double lambda_train = 0.05;
  double lambda_infer = 0.07;
  std::uint64_t seed = 0;
  std::size_t schedule_steps = 1000;
  double schedule_terminal_gap = 2e-6;
  SrMode sr = SrMode::resize;
  double d_max = 50.0;
  /// Resolution the scene intrinsics are expressed in; K is rescaled to
  /// width x height.
  std::size_t calib_width = 512;
  std::size_t calib_height = 256;
  /// Clamp for intermediate x0 estimates during sampling; 0 disables.
  double clip_denoised = 1.0;
  DenoiserConfig denoiser = DenoiserConfig::generation();
  std::size_t train_steps = 200;
  double learning_rate = 0.05;
  /// Train on the first sample with one fixed (step, noise) draw.
  bool overfit = false;

  void validate() const;
  NoiseSchedule schedule() const;
  std::size_t sr_factor() const { return sr == SrMode::none ? 1 : 2; }
};

/// JSON keys mirror the field names. "denoiser" is "tiny", "generation" or an
/// object of DenoiserConfig fields. Unknown keys are rejected.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string run_config_to_json(const RunConfig& config);

/// Scene frames [0, frames) with intrinsics rescaled to the config resolution.
SceneSequence prepare_scene(const SceneSequence& scene, const RunConfig& config, std::size_t frames);

/// Deterministic stand-in photographs rendered from the layout: a shaded
/// background from the ray directions with roads, box silhouettes by depth
/// and box edges painted over it. Values are multiples of 1/255.
VideoFrames synthesize_frames(const ControlTensor& control);

/// Scenes from *.json files in a directory, sorted by file name.
std::vector<SceneSequence> load_scene_directory(const std::filesystem::path& directory);

struct TrainResult {
  DenoiserWeights weights;
  std::vector<double> loss_history;
};

/// Image-mode training over every (scene, frame) multi-view sample.
TrainResult train_stage1(const std::vector<SceneSequence>& scenes, const RunConfig& config,
                         std::ostream* log = nullptr);
/// Video-mode training over clips of up to config.frames frames, conditioned
/// on the ground-truth first-frame latent with the lambda_train prior.
TrainResult train_stage2(const std::vector<SceneSequence>& scenes, const RunConfig& config,
                         std::ostream* log = nullptr);

void write_loss_history(const std::filesystem::path& path, const std::vector<double>& history);

using SuperResolver = std::function<VideoFrames(const VideoFrames&)>;

/// 2x upscaling. Resize is bilinear with output pixel X reading source
/// coordinate X / 2, so even output pixels copy the source exactly.
VideoFrames super_resolve(const VideoFrames& frames, SrMode mode, const SuperResolver& plugin = {});

struct GenerateResult {
  LatentVideo first_frame_latent;  // stage-1 sample
  LatentVideo video_latent;        // frame 0 is the stage-1 sample
  VideoFrames frames;              // decoded, clamped to [0, 1], super-resolved
};

GenerateResult generate(const SceneSequence& scene, const DenoiserWeights& stage1, const DenoiserWeights& stage2,
                        const RunConfig& config, const SuperResolver& plugin = {}, std::ostream* log = nullptr);

}  // namespace panoforge
