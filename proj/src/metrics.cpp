// SPDX-License-Identifier: Apache-2.0
#include "panoforge/metrics.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "panoforge/error.hpp"

namespace panoforge {
namespace {

// Symmetric square root through the eigendecomposition, clamping negative
// eigenvalues from roundoff to zero.
Eigen::MatrixXd symmetric_sqrt(const Eigen::MatrixXd& m) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
  if (solver.info() != Eigen::Success) throw NumericError("eigendecomposition failed");
  const Eigen::VectorXd roots = solver.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return solver.eigenvectors() * roots.asDiagonal() * solver.eigenvectors().transpose();
}

double trace_sqrt(const Eigen::MatrixXd& m) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericError("eigendecomposition failed");
  return solver.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
}

}  // namespace

GaussianStats fit_gaussian(std::span<const std::vector<double>> features) {
  if (features.size() < 2) throw ShapeError("fit_gaussian needs at least two samples");
  const std::size_t d = features.front().size();
  if (d == 0) throw ShapeError("fit_gaussian needs non-empty feature vectors");
  GaussianStats stats;
  stats.count = features.size();
  stats.mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  for (const auto& f : features) {
    if (f.size() != d) throw ShapeError("feature vectors differ in length");
    stats.mean += Eigen::Map<const Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(d));
  }
  stats.mean /= static_cast<double>(features.size());
  stats.cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  for (const auto& f : features) {
    const Eigen::VectorXd c = Eigen::Map<const Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(d)) - stats.mean;
    stats.cov += c * c.transpose();
  }
  stats.cov /= static_cast<double>(features.size() - 1);
  return stats;
}

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  if (a.dim() != b.dim() || a.cov.rows() != b.cov.rows() || a.cov.rows() != a.mean.size()) {
    throw ShapeError("frechet_distance: dimension mismatch");
  }
  const double mean_term = (a.mean - b.mean).squaredNorm();
  const Eigen::MatrixXd root_a = symmetric_sqrt(a.cov);
  const double cross = trace_sqrt(root_a * b.cov * root_a);
  const double value = mean_term + a.cov.trace() + b.cov.trace() - 2.0 * cross;
  if (!std::isfinite(value)) throw NumericError("frechet_distance is not finite");
  return std::max(value, 0.0);
}

std::vector<double> pooled_gray_features(std::span<const float> rgb, std::size_t height, std::size_t width) {
  constexpr std::size_t kGrid = 4;
  if (height < kGrid || width < kGrid || rgb.size() != height * width * 3) {
    throw ShapeError("pooled_gray_features needs an RGB image of at least 4x4");
  }
  std::vector<double> out(kGrid * kGrid, 0.0);
  std::vector<double> counts(kGrid * kGrid, 0.0);
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t cy = y * kGrid / height;
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t cx = x * kGrid / width;
      const float* p = rgb.data() + (y * width + x) * 3;
      out[cy * kGrid + cx] += (static_cast<double>(p[0]) + p[1] + p[2]) / 3.0;
      counts[cy * kGrid + cx] += 1.0;
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= counts[i];
  return out;
}

std::vector<std::vector<double>> extract_features(const VideoFrames& frames, const FeatureExtractor& extractor) {
  std::vector<std::vector<double>> out;
  const std::size_t image = frames.height() * frames.width() * 3;
  for (std::size_t v = 0; v < frames.views(); ++v) {
    for (std::size_t t = 0; t < frames.frames(); ++t) {
      const float* begin = frames.values().data() + (v * frames.frames() + t) * image;
      out.push_back(extractor(std::span<const float>(begin, image), frames.height(), frames.width()));
    }
  }
  return out;
}

double temporal_consistency(const VideoFrames& frames) {
  if (frames.frames() < 2) throw ShapeError("temporal_consistency needs at least two frames");
  if (frames.views() == 0) throw ShapeError("temporal_consistency needs at least one view");
  const std::size_t image = frames.height() * frames.width() * 3;
  double total = 0.0;
  for (std::size_t v = 0; v < frames.views(); ++v) {
    double view_sum = 0.0;
    for (std::size_t t = 1; t < frames.frames(); ++t) {
      const float* a = frames.values().data() + (v * frames.frames() + t - 1) * image;
      const float* b = frames.values().data() + (v * frames.frames() + t) * image;
      double acc = 0.0;
      for (std::size_t i = 0; i < image; ++i) {
        const double d = static_cast<double>(b[i]) - a[i];
        acc += d * d;
      }
      view_sum += acc / static_cast<double>(image);
    }
    total += view_sum / static_cast<double>(frames.frames() - 1);
  }
  return total / static_cast<double>(frames.views());
}

double seam_discontinuity(std::span<const float> panorama, std::size_t height, std::size_t width,
                          std::size_t channels, std::size_t views) {
  if (views == 0 || width % views != 0) throw ShapeError("panorama width does not divide by the view count");
  if (panorama.size() != height * width * channels) throw ShapeError("panorama size does not match its dims");
  if (views == 1 || height == 0) return 0.0;
  const std::size_t view_width = width / views;
  double seam = 0.0, interior = 0.0;
  std::size_t seam_n = 0, interior_n = 0;
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 1; x < width; ++x) {
      double step = 0.0;
      for (std::size_t c = 0; c < channels; ++c) {
        const double d = static_cast<double>(panorama[(y * width + x) * channels + c]) -
                         panorama[(y * width + x - 1) * channels + c];
        step += d * d;
      }
      step /= static_cast<double>(channels);
      if (x % view_width == 0) {
        seam += step;
        ++seam_n;
      } else {
        interior += step;
        ++interior_n;
      }
    }
  }
  const double seam_mean = seam / static_cast<double>(seam_n);
  const double interior_mean = interior_n ? interior / static_cast<double>(interior_n) : 0.0;
  return std::max(seam_mean - interior_mean, 0.0);
}

double seam_discontinuity(const VideoFrames& frames) {
  if (frames.frames() == 0) return 0.0;
  double total = 0.0;
  for (std::size_t t = 0; t < frames.frames(); ++t) {
    total += seam_discontinuity(frames.panorama(t), frames.height(), frames.views() * frames.width(), 3, frames.views());
  }
  return total / static_cast<double>(frames.frames());
}

MetricsReport evaluate_metrics(const VideoFrames& generated, const VideoFrames& reference,
                               const FeatureExtractor& extractor) {
  const auto gen = extract_features(generated, extractor);
  const auto ref = extract_features(reference, extractor);
  MetricsReport report;
  report.fd = frechet_distance(fit_gaussian(gen), fit_gaussian(ref));
  report.temporal_consistency = generated.frames() >= 2 ? temporal_consistency(generated) : 0.0;
  report.seam = seam_discontinuity(generated);
  report.n_samples = gen.size();
  return report;
}

std::string metrics_to_json(const MetricsReport& report) {
  nlohmann::json j{{"fd", report.fd},
                   {"temporal_consistency", report.temporal_consistency},
                   {"seam", report.seam},
                   {"n_samples", report.n_samples}};
  return j.dump(2);
}

}  // namespace panoforge
