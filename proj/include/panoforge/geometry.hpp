// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "panoforge/scene.hpp"

namespace panoforge {

// Pixel coordinates use a corner origin: pixel (x, y) is sampled at
// (u, v) = (x, y) with no half-pixel offset.

/// Frustum point (u*d, v*d, d, 1) lifted to ego coordinates: E * K^-1 * p.
/// Throws NumericError for d <= 0 or a singular intrinsic.
Vec4 unproject(double u, double v, double depth, const CameraCalib& calib);

/// Unit camera ray through pixel (u, v): the normalized difference of the
/// points unprojected at depths d1 and d2.
Vec3 direction_vector(double u, double v, const CameraCalib& calib, double d1 = 1.0,
                      double d2 = 2.0);

/// Precomputed E * K^-1 for repeated unprojection with one calibration.
class Unprojector {
 public:
  explicit Unprojector(const CameraCalib& calib);

  Vec4 point(double u, double v, double depth) const;
  Vec3 direction(double u, double v, double d1 = 1.0, double d2 = 2.0) const;

 private:
  Mat4 camera_to_ego_;  // E * K^-1
};

/// Ego point -> camera coordinates -> pixel, the inverse path of Unprojector.
class Projector {
 public:
  explicit Projector(const CameraCalib& calib);

  Vec3 to_camera(const Vec3& ego) const;
  /// Perspective projection of a camera-space point; z must be positive.
  Vec2 to_pixel(const Vec3& camera) const;

 private:
  Mat4 ego_to_camera_;  // E^-1
  Mat4 intrinsic_;
};

struct DirectionField {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<Vec3> directions;  // row-major, y then x

  const Vec3& at(std::size_t x, std::size_t y) const { return directions[y * width + x]; }
};

DirectionField direction_field(const CameraCalib& calib, std::size_t width, std::size_t height);

/// Componentwise (d + 1) / 2 * 255.
Vec3 pseudocolor(const Vec3& direction);

struct PseudoColorImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> rgb;  // row-major, 3 interleaved channels

  double at(std::size_t x, std::size_t y, std::size_t c) const { return rgb[(y * width + x) * 3 + c]; }
};

PseudoColorImage pose_pseudocolor(const DirectionField& field);

/// Scales the pixel rows of every intrinsic, for rendering a scene at a
/// resolution other than the one its calibration was authored for.
SceneSequence rescale_intrinsics(SceneSequence scene, double sx, double sy);

}  // namespace panoforge
