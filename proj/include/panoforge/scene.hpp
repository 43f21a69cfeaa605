// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "panoforge/error.hpp"

namespace panoforge {

using Mat4 = Eigen::Matrix4d;
using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;

/// Homogeneous pinhole calibration. `intrinsic` maps camera coordinates to
/// depth-scaled pixels, `extrinsic` maps camera coordinates to ego coordinates.
struct CameraCalib {
  Mat4 intrinsic = Mat4::Identity();
  Mat4 extrinsic = Mat4::Identity();

  static CameraCalib identity() { return {}; }
};

struct ObjectBox3D {
  Vec3 center = Vec3::Zero();
  Vec3 size = Vec3::Ones();  // length (x), width (y), height (z), meters
  double yaw = 0.0;          // radians about the ego z axis, in [-pi, pi)
  int category_id = 0;
  std::int64_t track_id = 0;
};

enum class LaneType { divider, boundary, crossing };

std::string_view to_string(LaneType type);

/// Polyline on the z = 0 ground plane of the ego frame.
struct RoadPolyline {
  std::vector<Vec2> points;
  LaneType lane_type = LaneType::divider;
};

struct SceneFrame {
  std::vector<CameraCalib> cameras;  // one per view, fixed view order
  std::vector<ObjectBox3D> boxes;
  std::vector<RoadPolyline> roads;
};

struct SceneSequence {
  std::size_t views = 1;
  std::vector<SceneFrame> frames;
  std::vector<std::string> attributes;

  std::size_t frame_count() const noexcept { return frames.size(); }
};

bool operator==(const CameraCalib& a, const CameraCalib& b);
bool operator==(const ObjectBox3D& a, const ObjectBox3D& b);
bool operator==(const RoadPolyline& a, const RoadPolyline& b);
bool operator==(const SceneFrame& a, const SceneFrame& b);
bool operator==(const SceneSequence& a, const SceneSequence& b);

/// Raised by scene parsing and validation. `path` names the offending
/// element, e.g. `frames[2].cameras[0].intrinsic`.
class SceneError : public Error {
 public:
  enum class Kind { syntax, schema, invariant };

  SceneError(Kind kind, std::string path, std::string detail, std::size_t line = 0,
             std::size_t column = 0);

  Kind kind() const noexcept { return kind_; }
  const std::string& path() const noexcept { return path_; }
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  Kind kind_;
  std::string path_;
  std::size_t line_;
  std::size_t column_;
};

/// Parses and fully validates a scene JSON document.
SceneSequence parse_scene(std::string_view text);

/// Reads a scene file; throws IoError when the file cannot be read.
SceneSequence load_scene(const std::filesystem::path& path);

std::string serialize_scene(const SceneSequence& scene);

/// Checks every invariant of the scene types; throws SceneError (invariant).
void validate_scene(const SceneSequence& scene);

/// Deterministic stand-in for a text encoder: each tag selects a bucket of a
/// seeded Gaussian table (tags outside the vocabulary share a reserved
/// bucket), bucket rows are summed over the distinct tags and the result is
/// scaled to unit Euclidean norm.
std::vector<double> text_attribute_embedding(std::span<const std::string> tags, std::size_t dim);

/// Tags with their own embedding bucket.
std::span<const std::string_view> attribute_vocabulary();

}  // namespace panoforge
