// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "panoforge/diffusion.hpp"
#include "panoforge/layout.hpp"
#include "panoforge/rng.hpp"
#include "panoforge/tensor.hpp"

namespace panoforge {

/// Encoder/decoder noise predictor. Level l runs at channels(l) with spatial
/// size halved per level. Attention token width at a level equals its
/// channel count and must divide by `heads`.
struct DenoiserConfig {
  std::size_t base_channels = 16;
  std::size_t levels = 2;
  std::size_t blocks_per_level = 1;
  std::size_t attention_from_level = 0;  // attention sub-blocks at levels >= this
  std::size_t heads = 2;
  std::size_t latent_channels = 4;
  std::size_t condition_channels = 4;
  std::size_t control_channels = kControlChannels;
  std::size_t text_dim = 16;
  std::size_t groups = 4;

  /// Test-scale network: base 16, two levels, attention everywhere.
  static DenoiserConfig tiny();
  /// Inference-scale network sized for a single CPU core: base 8, three
  /// levels, attention on the coarsest level only.
  static DenoiserConfig generation();

  void validate() const;
  std::size_t channels(std::size_t level) const { return base_channels << level; }
  std::size_t embed_dim() const { return 4 * base_channels; }
  bool attention_at(std::size_t level) const { return level >= attention_from_level; }
  /// Latent height and view width must divide by this.
  std::size_t spatial_multiple() const { return std::size_t{1} << (levels - 1); }

  friend bool operator==(const DenoiserConfig&, const DenoiserConfig&) = default;
};

using ParameterSet = std::map<std::string, Tensor>;

/// Named parameters for one stage. Stage-1 and stage-2 weights share the
/// architecture and differ only in values.
struct DenoiserWeights {
  DenoiserConfig config;
  ParameterSet params;

  /// Deterministic init. The control branch starts as a copy of the encoder
  /// and its output projections are exactly zero.
  static DenoiserWeights initialize(const DenoiserConfig& config, std::uint64_t seed);

  /// Names and shapes the config requires.
  static std::map<std::string, std::vector<std::size_t>> layout(const DenoiserConfig& config);

  const Tensor& at(const std::string& name) const;
  std::size_t parameter_count() const;

  friend bool operator==(const DenoiserWeights&, const DenoiserWeights&) = default;
};

enum class DenoiserMode { image, video };

DenoiserMode parse_denoiser_mode(std::string_view text);
std::string_view to_string(DenoiserMode mode);

/// Control tensor frames [first, first + frames) average-pooled by `factor`
/// into [frame * views + view][19][H/factor][W/factor]; pose channels are
/// divided by 255 so every channel lies in [0, 1].
Tensor pool_control(const ControlTensor& control, std::size_t first, std::size_t frames,
                    std::size_t factor);

struct DenoiserInput {
  LatentVideo x_t;
  std::size_t step = 0;
  std::vector<double> text;               // text_dim values; empty means zeros
  std::optional<LatentVideo> condition;   // same shape as x_t; absent means zeros
  std::optional<Tensor> control;          // pooled control; absent disables the branch
  DenoiserMode mode = DenoiserMode::video;
};

/// Receives named intermediate features, [frame * views + view][C][H][W].
using FeatureTrace = std::function<void(std::string_view name, const Tensor& value)>;

LatentVideo predict_noise(const DenoiserWeights& weights, const DenoiserInput& input,
                          const FeatureTrace& trace = {});

/// Condition channels for a clip: z1 at frame 0, zeros elsewhere.
LatentVideo build_condition(const LatentShape& shape, const std::optional<LatentVideo>& first_frame);

/// Network input [frame * views + view][C + condition][H][W].
Tensor build_network_input(const LatentVideo& x_t, const std::optional<LatentVideo>& condition,
                           std::size_t condition_channels);

struct TrainingBatch {
  LatentVideo latent;                     // clean x0
  std::optional<Tensor> control;          // pooled
  std::vector<double> text;
  std::optional<LatentVideo> first_frame; // video stage: z1, also fed as condition
  DenoiserMode mode = DenoiserMode::video;
};

struct TrainingDraw {
  std::size_t step = 0;
  LatentVideo noise;
};

TrainingDraw draw_training(const LatentShape& shape, const NoiseSchedule& schedule,
                           const SeededRng& rng);

struct TrainingSample {
  DenoiserInput input;
  LatentVideo target;  // the noise actually mixed into x_t
};

/// Mixes the prior into frames 1.. when a first frame is present, diffuses
/// the clean latent and assembles the network input.
TrainingSample make_training_sample(const TrainingBatch& batch, const TrainingDraw& draw,
                                    const NoiseSchedule& schedule, double lambda);

using SamplePredictor = std::function<LatentVideo(const DenoiserInput& input)>;

double training_loss(const SamplePredictor& predictor, const TrainingBatch& batch,
                     const TrainingDraw& draw, const NoiseSchedule& schedule, double lambda);
double training_loss(const DenoiserWeights& weights, const TrainingBatch& batch,
                     const TrainingDraw& draw, const NoiseSchedule& schedule, double lambda);
double training_loss(const DenoiserWeights& weights, const TrainingBatch& batch,
                     const NoiseSchedule& schedule, double lambda, const SeededRng& rng);

struct LossGradient {
  double loss = 0.0;
  ParameterSet gradients;
};

LossGradient loss_gradient(const DenoiserWeights& weights, const TrainingBatch& batch,
                           const TrainingDraw& draw, const NoiseSchedule& schedule, double lambda);
LossGradient loss_gradient(const DenoiserWeights& weights, const TrainingBatch& batch,
                           const NoiseSchedule& schedule, double lambda, const SeededRng& rng);

/// w - lr * g for every parameter.
DenoiserWeights sgd_step(const DenoiserWeights& weights, const ParameterSet& gradients, double lr);
void sgd_step_in_place(DenoiserWeights& weights, const ParameterSet& gradients, double lr);

}  // namespace panoforge
