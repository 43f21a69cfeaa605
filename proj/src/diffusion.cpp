// SPDX-License-Identifier: Apache-2.0
#include "panoforge/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "panoforge/error.hpp"

namespace panoforge {
namespace {

constexpr double kMinAlpha = 1e-12;

void require_same_shape(const LatentVideo& a, const LatentVideo& b, const char* what) {
  if (a.shape() != b.shape()) throw ShapeError(std::string(what) + ": latent shape mismatch");
}

std::string describe(const LatentShape& s) {
  return "(T=" + std::to_string(s.frames) + ", H=" + std::to_string(s.height) +
         ", W=" + std::to_string(s.view_width) + ", V=" + std::to_string(s.views) +
         ", C=" + std::to_string(s.channels) + ")";
}

}  // namespace

LatentVideo::LatentVideo(const LatentShape& shape, double fill)
    : shape_(shape), values_(shape.size(), fill) {}

LatentVideo::LatentVideo(const LatentShape& shape, std::vector<double> values)
    : shape_(shape), values_(std::move(values)) {
  if (values_.size() != shape_.size()) {
    throw ShapeError("latent " + describe(shape_) + " given " + std::to_string(values_.size()) +
                     " values");
  }
}

LatentVideo LatentVideo::frame(std::size_t t) const {
  if (t >= shape_.frames) throw IndexError("latent frame " + std::to_string(t) + " out of range");
  LatentShape one = shape_;
  one.frames = 1;
  const std::size_t n = one.size();
  return LatentVideo(one, std::vector<double>(values_.begin() + static_cast<std::ptrdiff_t>(t * n),
                                              values_.begin() + static_cast<std::ptrdiff_t>((t + 1) * n)));
}

void LatentVideo::set_frame(std::size_t t, const LatentVideo& one_frame) {
  if (t >= shape_.frames) throw IndexError("latent frame " + std::to_string(t) + " out of range");
  LatentShape one = shape_;
  one.frames = 1;
  if (one_frame.shape() != one) throw ShapeError("set_frame: frame shape mismatch");
  std::copy(one_frame.values_.begin(), one_frame.values_.end(),
            values_.begin() + static_cast<std::ptrdiff_t>(t * one.size()));
}

bool LatentVideo::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

NoiseSchedule::NoiseSchedule(std::vector<double> alpha, std::vector<double> sigma)
    : alpha_(std::move(alpha)), sigma_(std::move(sigma)) {
  if (alpha_.empty() || alpha_.size() != sigma_.size()) {
    throw ConfigError("schedule needs matching non-empty alpha and sigma");
  }
  for (std::size_t t = 0; t < alpha_.size(); ++t) {
    const double a = alpha_[t];
    const double s = sigma_[t];
    if (!(a > 0.0 && a <= 1.0)) throw ConfigError("alpha must lie in (0, 1]");
    if (!(s >= 0.0 && s < 1.0)) throw ConfigError("sigma must lie in [0, 1)");
    if (std::abs(a * a + s * s - 1.0) > 1e-9) {
      throw ConfigError("schedule is not variance preserving at step " + std::to_string(t));
    }
    if (t > 0 && !(a < alpha_[t - 1] && s > sigma_[t - 1])) {
      throw ConfigError("schedule must be strictly monotone");
    }
  }
}

NoiseSchedule NoiseSchedule::cosine(std::size_t steps, double terminal_gap) {
  if (steps == 0) throw ConfigError("schedule needs at least one step");
  if (!(terminal_gap > 0.0 && terminal_gap < 1.0)) throw ConfigError("terminal_gap must lie in (0, 1)");
  std::vector<double> alpha(steps), sigma(steps);
  const double span = steps > 1 ? static_cast<double>(steps - 1) : 1.0;
  for (std::size_t t = 0; t < steps; ++t) {
    const double theta = 0.5 * std::numbers::pi * (1.0 - terminal_gap) * static_cast<double>(t) / span;
    alpha[t] = std::cos(theta);
    sigma[t] = std::sin(theta);
  }
  return NoiseSchedule(std::move(alpha), std::move(sigma));
}

LatentVideo forward_diffuse(const LatentVideo& x, std::size_t t, const NoiseSchedule& schedule,
                            const LatentVideo& eps) {
  require_same_shape(x, eps, "forward_diffuse");
  if (t >= schedule.steps()) throw IndexError("diffusion step " + std::to_string(t) + " out of range");
  const double a = schedule.alpha(t);
  const double s = schedule.sigma(t);
  LatentVideo out(x.shape());
  auto dst = out.values();
  const auto xs = x.values();
  const auto es = eps.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = a * xs[i] + s * es[i];
  return out;
}

std::vector<LatentVideo> apply_noise_prior(const LatentVideo& z1,
                                           std::span<const LatentVideo> eps_frames,
                                           double lambda) {
  if (!(lambda >= 0.0)) throw ConfigError("noise prior lambda must be non-negative");
  std::vector<LatentVideo> out;
  out.reserve(eps_frames.size());
  for (const LatentVideo& eps : eps_frames) {
    require_same_shape(z1, eps, "apply_noise_prior");
    LatentVideo mixed(eps.shape());
    auto dst = mixed.values();
    const auto zs = z1.values();
    const auto es = eps.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = lambda * zs[i] + es[i];
    out.push_back(std::move(mixed));
  }
  return out;
}

LatentVideo apply_noise_prior(const LatentVideo& z1, const LatentVideo& noise, double lambda,
                              std::size_t first_frame) {
  if (z1.frames() != 1) throw ShapeError("noise prior condition must be a single frame");
  LatentShape one = noise.shape();
  one.frames = 1;
  if (z1.shape() != one) throw ShapeError("noise prior condition shape mismatch");
  LatentVideo out = noise;
  for (std::size_t t = first_frame; t < noise.frames(); ++t) {
    const LatentVideo eps = noise.frame(t);
    out.set_frame(t, apply_noise_prior(z1, std::span(&eps, 1), lambda).front());
  }
  return out;
}

LatentVideo ddim_step(const LatentVideo& x_t, const LatentVideo& eps_hat, std::size_t t,
                      std::size_t t_prev, const NoiseSchedule& schedule) {
  require_same_shape(x_t, eps_hat, "ddim_step");
  if (t >= schedule.steps()) throw IndexError("diffusion step " + std::to_string(t) + " out of range");
  if (t_prev > t) throw IndexError("ddim_step requires t_prev <= t");
  if (t_prev == t) return x_t;
  const double a = schedule.alpha(t);
  const double s = schedule.sigma(t);
  if (a < kMinAlpha) throw NumericError("alpha_t too small for DDIM inversion");
  const double a_prev = schedule.alpha(t_prev);
  const double s_prev = schedule.sigma(t_prev);
  LatentVideo out(x_t.shape());
  auto dst = out.values();
  const auto xs = x_t.values();
  const auto es = eps_hat.values();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    const double x0 = (xs[i] - s * es[i]) / a;
    dst[i] = a_prev * x0 + s_prev * es[i];
  }
  return out;
}

std::vector<std::size_t> ddim_timesteps(std::size_t train_steps, std::size_t num_steps) {
  if (num_steps == 0 || num_steps > train_steps) {
    throw ConfigError("sampling steps must lie in [1, " + std::to_string(train_steps) + "]");
  }
  if (num_steps == 1) return {train_steps - 1};
  std::vector<std::size_t> steps(num_steps);
  const double last = static_cast<double>(train_steps - 1);
  for (std::size_t i = 0; i < num_steps; ++i) {
    const double pos = last * static_cast<double>(num_steps - 1 - i) / static_cast<double>(num_steps - 1);
    steps[i] = static_cast<std::size_t>(std::llround(pos));
  }
  return steps;
}

LatentVideo draw_noise(const LatentShape& shape, const SeededRng& rng) {
  LatentVideo out(shape);
  for (std::size_t t = 0; t < shape.frames; ++t) {
    for (std::size_t v = 0; v < shape.views; ++v) {
      SeededRng stream = rng.split(t, v);
      for (std::size_t y = 0; y < shape.height; ++y)
        for (std::size_t x = 0; x < shape.view_width; ++x)
          for (std::size_t c = 0; c < shape.channels; ++c) out.at_view(t, v, y, x, c) = stream.normal();
    }
  }
  return out;
}

LatentVideo initial_latent(const LatentShape& shape, const SeededRng& rng,
                           const std::optional<NoisePrior>& prior) {
  LatentVideo x = draw_noise(shape, rng);
  if (prior) x = apply_noise_prior(prior->first_frame, x, prior->lambda, prior->first_prior_frame);
  return x;
}

LatentVideo sample(const NoisePredictor& predictor, const NoiseSchedule& schedule,
                   const LatentShape& shape, const SeededRng& rng, const SamplerOptions& options) {
  const std::vector<std::size_t> steps = ddim_timesteps(schedule.steps(), options.num_steps);
  LatentVideo x = initial_latent(shape, rng, options.prior);
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const std::size_t t = steps[i];
    const double a = schedule.alpha(t);
    const double s = schedule.sigma(t);
    // At a noise-free step the current latent already is the x0 estimate.
    if (s == 0.0 && a == 1.0) break;
    const LatentVideo eps = predictor(x, t);
    if (eps.shape() != shape) throw ShapeError("denoiser output shape mismatch");
    if (a < kMinAlpha) throw NumericError("alpha_t too small for DDIM inversion");
    const bool last = i + 1 == steps.size();
    const double a_prev = last ? 1.0 : schedule.alpha(steps[i + 1]);
    const double s_prev = last ? 0.0 : schedule.sigma(steps[i + 1]);
    auto xs = x.values();
    const auto es = eps.values();
    for (std::size_t k = 0; k < xs.size(); ++k) {
      double x0 = (xs[k] - s * es[k]) / a;
      if (options.clip_denoised) x0 = std::clamp(x0, -*options.clip_denoised, *options.clip_denoised);
      xs[k] = a_prev * x0 + s_prev * es[k];
    }
  }
  return x;
}

}  // namespace panoforge
