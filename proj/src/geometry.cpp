// SPDX-License-Identifier: Apache-2.0
#include "panoforge/geometry.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <string>

namespace panoforge {
namespace {

constexpr double kSingularDeterminant = 1e-12;

Mat4 checked_inverse(const Mat4& m, const char* what) {
  if (!m.allFinite() || std::abs(m.determinant()) <= kSingularDeterminant) {
    throw NumericError(std::string(what) + " matrix is singular");
  }
  return m.inverse();
}

}  // namespace

Unprojector::Unprojector(const CameraCalib& calib)
    : camera_to_ego_(calib.extrinsic * checked_inverse(calib.intrinsic, "intrinsic")) {}

Vec4 Unprojector::point(double u, double v, double depth) const {
  if (!(depth > 0.0)) throw NumericError("unprojection depth must be positive");
  Vec4 p = camera_to_ego_ * Vec4(u * depth, v * depth, depth, 1.0);
  if (p.w() != 1.0) {
    if (std::abs(p.w()) < kSingularDeterminant) throw NumericError("unprojected point at infinity");
    p /= p.w();
  }
  return p;
}

Vec3 Unprojector::direction(double u, double v, double d1, double d2) const {
  const Vec4 diff = point(u, v, d2) - point(u, v, d1);
  const Vec3 ray = diff.head<3>();
  const double norm = ray.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) throw NumericError("degenerate camera ray");
  return ray / norm;
}

Vec4 unproject(double u, double v, double depth, const CameraCalib& calib) {
  return Unprojector(calib).point(u, v, depth);
}

Vec3 direction_vector(double u, double v, const CameraCalib& calib, double d1, double d2) {
  return Unprojector(calib).direction(u, v, d1, d2);
}

Projector::Projector(const CameraCalib& calib)
    : ego_to_camera_(checked_inverse(calib.extrinsic, "extrinsic")), intrinsic_(calib.intrinsic) {}

Vec3 Projector::to_camera(const Vec3& ego) const {
  const Vec4 p = ego_to_camera_ * Vec4(ego.x(), ego.y(), ego.z(), 1.0);
  return p.head<3>();
}

Vec2 Projector::to_pixel(const Vec3& camera) const {
  const Vec4 p = intrinsic_ * Vec4(camera.x(), camera.y(), camera.z(), 1.0);
  return Vec2(p.x() / p.z(), p.y() / p.z());
}

DirectionField direction_field(const CameraCalib& calib, std::size_t width, std::size_t height) {
  const Unprojector unprojector(calib);
  DirectionField field{width, height, {}};
  field.directions.reserve(width * height);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      field.directions.push_back(
          unprojector.direction(static_cast<double>(x), static_cast<double>(y)));
    }
  }
  return field;
}

Vec3 pseudocolor(const Vec3& direction) {
  Vec3 c = (direction.array() + 1.0) * 0.5 * 255.0;
  // Unit inputs land in range already; the clamp only absorbs rounding.
  return c.cwiseMax(0.0).cwiseMin(255.0);
}

PseudoColorImage pose_pseudocolor(const DirectionField& field) {
  PseudoColorImage image{field.width, field.height, {}};
  image.rgb.reserve(field.directions.size() * 3);
  for (const Vec3& d : field.directions) {
    const Vec3 c = pseudocolor(d);
    image.rgb.insert(image.rgb.end(), {c.x(), c.y(), c.z()});
  }
  return image;
}

SceneSequence rescale_intrinsics(SceneSequence scene, double sx, double sy) {
  for (SceneFrame& frame : scene.frames) {
    for (CameraCalib& cam : frame.cameras) {
      cam.intrinsic.row(0) *= sx;
      cam.intrinsic.row(1) *= sy;
    }
  }
  return scene;
}

}  // namespace panoforge
