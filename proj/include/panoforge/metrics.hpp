// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "panoforge/codec.hpp"

namespace panoforge {

struct GaussianStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  std::size_t count = 0;

  std::size_t dim() const noexcept { return static_cast<std::size_t>(mean.size()); }
};

/// Sample mean and unbiased (n - 1) covariance. Needs at least two samples.
GaussianStats fit_gaussian(std::span<const std::vector<double>> features);

/// |mu_a - mu_b|^2 + Tr(S_a + S_b) - 2 Tr((S_a^1/2 S_b S_a^1/2)^1/2), with
/// symmetric eigendecompositions throughout and tiny negative residue
/// clamped to zero.
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

/// Maps one RGB image (H, W, 3) to a feature vector.
using FeatureExtractor =
    std::function<std::vector<double>(std::span<const float> rgb, std::size_t height, std::size_t width)>;

/// 4x4 average-pooled grayscale (16 values). Needs H and W >= 4.
std::vector<double> pooled_gray_features(std::span<const float> rgb, std::size_t height, std::size_t width);

/// One feature vector per (view, frame) image.
std::vector<std::vector<double>> extract_features(const VideoFrames& frames,
                                                  const FeatureExtractor& extractor = pooled_gray_features);

/// Mean squared difference of consecutive frames, averaged over views.
double temporal_consistency(const VideoFrames& frames);

/// Panorama (H, W_total, channels). Mean squared horizontal step across the
/// V - 1 inner view boundaries minus the mean over interior columns, floored
/// at zero. V = 1 gives 0.
double seam_discontinuity(std::span<const float> panorama, std::size_t height, std::size_t width,
                          std::size_t channels, std::size_t views);

/// Seam metric averaged over the frames of a clip.
double seam_discontinuity(const VideoFrames& frames);

struct MetricsReport {
  double fd = 0.0;
  double temporal_consistency = 0.0;
  double seam = 0.0;
  std::size_t n_samples = 0;
};

/// FD between generated and reference features, plus the two proxies on the
/// generated clip.
MetricsReport evaluate_metrics(const VideoFrames& generated, const VideoFrames& reference,
                               const FeatureExtractor& extractor = pooled_gray_features);

std::string metrics_to_json(const MetricsReport& report);

}  // namespace panoforge
