// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "panoforge/rng.hpp"

namespace panoforge {

struct LatentShape {
  std::size_t frames = 1;
  std::size_t height = 1;
  std::size_t view_width = 1;
  std::size_t views = 1;
  std::size_t channels = 4;

  std::size_t pano_width() const noexcept { return view_width * views; }
  std::size_t size() const noexcept { return frames * height * pano_width() * channels; }

  friend bool operator==(const LatentShape&, const LatentShape&) = default;
};

/// Joint multi-view video latent, H x (W*V) x T x C. Views are concatenated
/// along the width into one panorama per frame; storage is row-major over
/// (frame, row, panorama column, channel).
class LatentVideo {
 public:
  LatentVideo() = default;
  explicit LatentVideo(const LatentShape& shape, double fill = 0.0);
  LatentVideo(const LatentShape& shape, std::vector<double> values);

  const LatentShape& shape() const noexcept { return shape_; }
  std::size_t frames() const noexcept { return shape_.frames; }
  std::size_t height() const noexcept { return shape_.height; }
  std::size_t view_width() const noexcept { return shape_.view_width; }
  std::size_t views() const noexcept { return shape_.views; }
  std::size_t channels() const noexcept { return shape_.channels; }
  std::size_t pano_width() const noexcept { return shape_.pano_width(); }
  std::size_t size() const noexcept { return values_.size(); }

  double& at(std::size_t t, std::size_t y, std::size_t x_pan, std::size_t c) {
    return values_[index(t, y, x_pan, c)];
  }
  double at(std::size_t t, std::size_t y, std::size_t x_pan, std::size_t c) const {
    return values_[index(t, y, x_pan, c)];
  }
  double& at_view(std::size_t t, std::size_t v, std::size_t y, std::size_t x, std::size_t c) {
    return at(t, y, v * shape_.view_width + x, c);
  }
  double at_view(std::size_t t, std::size_t v, std::size_t y, std::size_t x, std::size_t c) const {
    return at(t, y, v * shape_.view_width + x, c);
  }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  /// Single frame t as a one-frame latent.
  LatentVideo frame(std::size_t t) const;
  void set_frame(std::size_t t, const LatentVideo& one_frame);

  bool all_finite() const noexcept;

  friend bool operator==(const LatentVideo&, const LatentVideo&) = default;

 private:
  std::size_t index(std::size_t t, std::size_t y, std::size_t x_pan, std::size_t c) const noexcept {
    return ((t * shape_.height + y) * shape_.pano_width() + x_pan) * shape_.channels + c;
  }

  LatentShape shape_;
  std::vector<double> values_;
};

/// Variance-preserving schedule: alpha_t^2 + sigma_t^2 = 1 at every step.
class NoiseSchedule {
 public:
  /// Validates monotonicity, ranges and the variance-preserving identity.
  NoiseSchedule(std::vector<double> alpha, std::vector<double> sigma);

  /// alpha_t = cos(theta_t), sigma_t = sin(theta_t), theta_t rising linearly
  /// from 0 to (1 - terminal_gap) * pi / 2 over the steps. A small gap keeps
  /// alpha positive at the last step while the terminal signal stays
  /// negligible, so sampling can start from pure noise.
  static NoiseSchedule cosine(std::size_t steps = 1000, double terminal_gap = 2e-6);

  std::size_t steps() const noexcept { return alpha_.size(); }
  double alpha(std::size_t t) const { return alpha_.at(t); }
  double sigma(std::size_t t) const { return sigma_.at(t); }

 private:
  std::vector<double> alpha_;
  std::vector<double> sigma_;
};

/// alpha_t * x + sigma_t * eps.
LatentVideo forward_diffuse(const LatentVideo& x, std::size_t t, const NoiseSchedule& schedule,
                            const LatentVideo& eps);

/// x^i = lambda * z1 + eps^i for every per-frame joint noise in the list.
std::vector<LatentVideo> apply_noise_prior(const LatentVideo& z1,
                                           std::span<const LatentVideo> eps_frames,
                                           double lambda);

/// Video form: frames [first_frame, T) of `noise` receive lambda * z1, earlier
/// frames pass through unchanged. z1 is a one-frame latent.
LatentVideo apply_noise_prior(const LatentVideo& z1, const LatentVideo& noise, double lambda,
                              std::size_t first_frame);

/// Deterministic (eta = 0) DDIM update from step t to t_prev <= t.
LatentVideo ddim_step(const LatentVideo& x_t, const LatentVideo& eps_hat, std::size_t t,
                      std::size_t t_prev, const NoiseSchedule& schedule);

/// Uniformly spaced steps over [0, train_steps - 1], descending, both ends
/// included.
std::vector<std::size_t> ddim_timesteps(std::size_t train_steps, std::size_t num_steps);

/// Standard normal latent; every (frame, view) block draws from its own
/// substream, so blocks can be filled in any order.
LatentVideo draw_noise(const LatentShape& shape, const SeededRng& rng);

using NoisePredictor = std::function<LatentVideo(const LatentVideo& x_t, std::size_t step)>;

struct NoisePrior {
  LatentVideo first_frame;  // one-frame latent z1
  double lambda = 0.07;
  std::size_t first_prior_frame = 1;
};

struct SamplerOptions {
  std::size_t num_steps = 25;
  std::optional<NoisePrior> prior;
  /// When set, each intermediate x0 estimate is clamped to [-c, c].
  std::optional<double> clip_denoised;
};

/// x_T = noise (+ lambda * z1 on prior frames), the sampler's starting point.
LatentVideo initial_latent(const LatentShape& shape, const SeededRng& rng,
                           const std::optional<NoisePrior>& prior);

/// DDIM loop over ddim_timesteps; returns the x0 estimate.
LatentVideo sample(const NoisePredictor& predictor, const NoiseSchedule& schedule,
                   const LatentShape& shape, const SeededRng& rng, const SamplerOptions& options);

}  // namespace panoforge
