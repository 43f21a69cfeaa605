// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "panoforge/scene.hpp"

namespace panoforge {

// Channel layout of a layout-control image.
inline constexpr std::size_t kControlChannels = 19;
inline constexpr std::size_t kDepthBins = 10;
inline constexpr std::size_t kDepthChannel = 0;   // 0..9, one-hot depth bin
inline constexpr std::size_t kBoxChannel = 10;    // 10..12, box wireframe color
inline constexpr std::size_t kRoadChannel = 13;   // 13..15, road polyline color
inline constexpr std::size_t kPoseChannel = 16;   // 16..18, ray pseudo-color in [0, 255]

/// Camera-space points closer than this are clipped away before projection.
inline constexpr double kNearClip = 1e-3;

using Rgb = std::array<double, 3>;

/// Colors for box categories (indexed by category_id modulo the table size)
/// and for lane types. All components in [0, 1].
struct Palette {
  std::vector<Rgb> categories;
  Rgb divider;
  Rgb boundary;
  Rgb crossing;

  static Palette standard();
  Rgb category(int category_id) const;
  Rgb lane(LaneType type) const;
};

struct ProjectedPoint {
  Vec2 pixel;
  double depth = 0.0;  // camera-space z
};

struct ProjectedEdge {
  ProjectedPoint a;
  ProjectedPoint b;
};

/// Perspective footprint of a 3D box after near-plane clipping.
struct ProjectedBox {
  std::vector<ProjectedEdge> edges;
  std::vector<ProjectedPoint> vertices;  // vertices of the clipped solid
  double nearest_depth = 0.0;

  bool empty() const noexcept { return edges.empty(); }
};

/// Eight box corners in ego coordinates; yaw rotates about the ego z axis.
std::array<Vec3, 8> box_corners(const ObjectBox3D& box);

ProjectedBox project_box(const ObjectBox3D& box, const CameraCalib& calib, std::size_t width,
                         std::size_t height);

/// Bin of (0, d_max] split into ten uniform half-open-left intervals; depths
/// past d_max saturate in the last bin.
std::size_t depth_bin(double depth, double d_max);

struct RenderOptions {
  std::size_t width = 512;
  std::size_t height = 256;
  double d_max = 50.0;
  Palette palette = Palette::standard();
};

/// One view of one frame, row-major (y, x, channel).
struct LayoutImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> values;

  float at(std::size_t x, std::size_t y, std::size_t c) const {
    return values[(y * width + x) * kControlChannels + c];
  }
};

LayoutImage rasterize_frame(const SceneSequence& scene, std::size_t frame, std::size_t view,
                            const RenderOptions& options);

/// Layout-control tensor of shape (views, frames, height, width, 19).
class ControlTensor {
 public:
  ControlTensor() = default;
  ControlTensor(std::size_t views, std::size_t frames, std::size_t height, std::size_t width);

  std::size_t views() const noexcept { return views_; }
  std::size_t frames() const noexcept { return frames_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::array<std::uint64_t, 5> dims() const noexcept {
    return {views_, frames_, height_, width_, kControlChannels};
  }

  float& at(std::size_t v, std::size_t t, std::size_t y, std::size_t x, std::size_t c) {
    return values_[offset(v, t) + (y * width_ + x) * kControlChannels + c];
  }
  float at(std::size_t v, std::size_t t, std::size_t y, std::size_t x, std::size_t c) const {
    return values_[offset(v, t) + (y * width_ + x) * kControlChannels + c];
  }

  const float* slice(std::size_t v, std::size_t t) const { return values_.data() + offset(v, t); }
  void set_slice(std::size_t v, std::size_t t, const LayoutImage& image);

  /// Frames [first, first + count) as a new tensor.
  ControlTensor frames_range(std::size_t first, std::size_t count) const;

  const std::vector<float>& values() const noexcept { return values_; }
  std::vector<float>& values() noexcept { return values_; }

  friend bool operator==(const ControlTensor&, const ControlTensor&) = default;

 private:
  std::size_t offset(std::size_t v, std::size_t t) const {
    return (v * frames_ + t) * height_ * width_ * kControlChannels;
  }

  std::size_t views_ = 0;
  std::size_t frames_ = 0;
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<float> values_;
};

ControlTensor render_sequence(const SceneSequence& scene, const RenderOptions& options);

void write_control_tensor(const std::filesystem::path& path, const ControlTensor& tensor);
ControlTensor read_control_tensor(const std::filesystem::path& path);

/// 8-bit PPM previews per (view, frame): depth (bin brightness), boxes,
/// roads and pose, quantized by round-half-up.
void write_control_previews(const std::filesystem::path& directory, const ControlTensor& tensor);

}  // namespace panoforge
