// SPDX-License-Identifier: Apache-2.0
#include "panoforge/layout.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>

#include "panoforge/geometry.hpp"
#include "panoforge/parallel.hpp"
#include "panoforge/tensor_io.hpp"

namespace panoforge {
namespace {

constexpr std::array<std::array<int, 2>, 12> kBoxEdges = {{
    {0, 1}, {1, 3}, {3, 2}, {2, 0},  // bottom face
    {4, 5}, {5, 7}, {7, 6}, {6, 4},  // top face
    {0, 4}, {1, 5}, {2, 6}, {3, 7},  // verticals
}};

struct Segment3 {
  Vec3 a;
  Vec3 b;
};

/// Clips a camera-space segment to z >= kNearClip.
std::optional<Segment3> clip_near(Vec3 a, Vec3 b) {
  const bool a_in = a.z() >= kNearClip;
  const bool b_in = b.z() >= kNearClip;
  if (!a_in && !b_in) return std::nullopt;
  if (a_in && b_in) return Segment3{a, b};
  const double s = (kNearClip - a.z()) / (b.z() - a.z());
  Vec3 cut = a + s * (b - a);
  cut.z() = kNearClip;
  return a_in ? Segment3{a, cut} : Segment3{cut, b};
}

ProjectedPoint project_point(const Projector& projector, const Vec3& camera) {
  return {projector.to_pixel(camera), camera.z()};
}

double cross(const Vec2& o, const Vec2& a, const Vec2& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

/// Counter-clockwise convex hull (monotone chain), collinear points dropped.
std::vector<Vec2> convex_hull(std::vector<Vec2> points) {
  std::sort(points.begin(), points.end(), [](const Vec2& a, const Vec2& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  points.erase(std::unique(points.begin(), points.end()), points.end());
  if (points.size() < 3) return points;
  std::vector<Vec2> hull(2 * points.size());
  std::size_t k = 0;
  for (const Vec2& p : points) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0.0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = points.size() - 1, lower = k + 1; i > 0; --i) {
    const Vec2& p = points[i - 1];
    while (k >= lower && cross(hull[k - 2], hull[k - 1], p) <= 0.0) --k;
    hull[k++] = p;
  }
  hull.resize(k - 1);
  return hull;
}

bool inside_convex(const std::vector<Vec2>& hull, const Vec2& p, double tolerance) {
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const Vec2& a = hull[i];
    const Vec2& b = hull[(i + 1) % hull.size()];
    if (cross(a, b, p) < -tolerance * (b - a).norm()) return false;
  }
  return true;
}

/// Liang-Barsky clip of a 2D segment to the pixel-center rectangle
/// [-0.5, w - 0.5] x [-0.5, h - 0.5].
std::optional<std::pair<Vec2, Vec2>> clip_to_image(Vec2 a, Vec2 b, std::size_t width,
                                                   std::size_t height) {
  const double xmin = -0.5, ymin = -0.5;
  const double xmax = static_cast<double>(width) - 0.5;
  const double ymax = static_cast<double>(height) - 0.5;
  const Vec2 d = b - a;
  double t0 = 0.0, t1 = 1.0;
  const std::array<double, 4> p = {-d.x(), d.x(), -d.y(), d.y()};
  const std::array<double, 4> q = {a.x() - xmin, xmax - a.x(), a.y() - ymin, ymax - a.y()};
  for (std::size_t i = 0; i < 4; ++i) {
    if (p[i] == 0.0) {
      if (q[i] < 0.0) return std::nullopt;
      continue;
    }
    const double r = q[i] / p[i];
    if (p[i] < 0.0) {
      if (r > t1) return std::nullopt;
      t0 = std::max(t0, r);
    } else {
      if (r < t0) return std::nullopt;
      t1 = std::min(t1, r);
    }
  }
  return std::make_pair(Vec2(a + t0 * d), Vec2(a + t1 * d));
}

class FramePainter {
 public:
  FramePainter(LayoutImage& image) : image_(image) {}

  void set(long x, long y, std::size_t channel, float value) {
    image_.values[index(x, y) + channel] = value;
  }

  bool in_bounds(long x, long y) const {
    return x >= 0 && y >= 0 && x < static_cast<long>(image_.width) &&
           y < static_cast<long>(image_.height);
  }

  void paint_rgb(long x, long y, std::size_t first_channel, const Rgb& color) {
    if (!in_bounds(x, y)) return;
    for (std::size_t c = 0; c < 3; ++c) set(x, y, first_channel + c, static_cast<float>(color[c]));
  }

  /// Bresenham between rounded endpoints after clipping to the image.
  void line(const Vec2& a, const Vec2& b, std::size_t first_channel, const Rgb& color) {
    if (!a.allFinite() || !b.allFinite()) return;
    const auto clipped = clip_to_image(a, b, image_.width, image_.height);
    if (!clipped) return;
    long x0 = std::lround(std::floor(clipped->first.x() + 0.5));
    long y0 = std::lround(std::floor(clipped->first.y() + 0.5));
    const long x1 = std::lround(std::floor(clipped->second.x() + 0.5));
    const long y1 = std::lround(std::floor(clipped->second.y() + 0.5));
    const long dx = std::abs(x1 - x0);
    const long dy = -std::abs(y1 - y0);
    const long sx = x0 < x1 ? 1 : -1;
    const long sy = y0 < y1 ? 1 : -1;
    long err = dx + dy;
    while (true) {
      paint_rgb(x0, y0, first_channel, color);
      if (x0 == x1 && y0 == y1) break;
      const long e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }

 private:
  std::size_t index(long x, long y) const {
    return (static_cast<std::size_t>(y) * image_.width + static_cast<std::size_t>(x)) *
           kControlChannels;
  }

  LayoutImage& image_;
};

void paint_box(FramePainter& painter, LayoutImage& image, const ProjectedBox& projected,
               std::size_t bin, const Rgb& color) {
  std::vector<Vec2> pixels;
  pixels.reserve(projected.vertices.size());
  for (const ProjectedPoint& p : projected.vertices) pixels.push_back(p.pixel);
  const std::vector<Vec2> hull = convex_hull(std::move(pixels));

  if (hull.size() >= 3) {
    double xmin = hull[0].x(), xmax = xmin, ymin = hull[0].y(), ymax = ymin;
    for (const Vec2& p : hull) {
      xmin = std::min(xmin, p.x());
      xmax = std::max(xmax, p.x());
      ymin = std::min(ymin, p.y());
      ymax = std::max(ymax, p.y());
    }
    const double w = static_cast<double>(image.width) - 1.0;
    const double h = static_cast<double>(image.height) - 1.0;
    const long x_lo = static_cast<long>(std::ceil(std::clamp(xmin, 0.0, w + 1.0)));
    const long x_hi = static_cast<long>(std::floor(std::clamp(xmax, -1.0, w)));
    const long y_lo = static_cast<long>(std::ceil(std::clamp(ymin, 0.0, h + 1.0)));
    const long y_hi = static_cast<long>(std::floor(std::clamp(ymax, -1.0, h)));
    for (long y = y_lo; y <= y_hi; ++y) {
      for (long x = x_lo; x <= x_hi; ++x) {
        if (!inside_convex(hull, Vec2(static_cast<double>(x), static_cast<double>(y)), 1e-9)) {
          continue;
        }
        for (std::size_t c = 0; c < kDepthBins; ++c) {
          painter.set(x, y, kDepthChannel + c, c == bin ? 1.0F : 0.0F);
        }
        // A nearer box hides the wireframes of boxes painted before it.
        for (std::size_t c = 0; c < 3; ++c) painter.set(x, y, kBoxChannel + c, 0.0F);
      }
    }
  }
  for (const ProjectedEdge& edge : projected.edges) {
    painter.line(edge.a.pixel, edge.b.pixel, kBoxChannel, color);
  }
}

}  // namespace

Palette Palette::standard() {
  return Palette{{{1.0, 0.0, 0.0},
                  {0.0, 1.0, 0.0},
                  {0.0, 0.0, 1.0},
                  {1.0, 1.0, 0.0},
                  {1.0, 0.0, 1.0},
                  {0.0, 1.0, 1.0},
                  {1.0, 0.5, 0.0},
                  {0.5, 0.0, 1.0},
                  {0.0, 0.5, 0.25},
                  {0.75, 0.75, 0.75}},
                 {1.0, 1.0, 1.0},
                 {1.0, 0.5, 0.0},
                 {0.0, 0.5, 1.0}};
}

Rgb Palette::category(int category_id) const {
  if (categories.empty()) throw ConfigError("palette has no category colors");
  const auto n = static_cast<int>(categories.size());
  return categories[static_cast<std::size_t>(((category_id % n) + n) % n)];
}

Rgb Palette::lane(LaneType type) const {
  switch (type) {
    case LaneType::divider: return divider;
    case LaneType::boundary: return boundary;
    case LaneType::crossing: return crossing;
  }
  return divider;
}

std::array<Vec3, 8> box_corners(const ObjectBox3D& box) {
  const double c = std::cos(box.yaw);
  const double s = std::sin(box.yaw);
  std::array<Vec3, 8> corners;
  for (int i = 0; i < 8; ++i) {
    const double lx = ((i & 1) ? 0.5 : -0.5) * box.size.x();
    const double ly = ((i & 2) ? 0.5 : -0.5) * box.size.y();
    const double lz = ((i & 4) ? 0.5 : -0.5) * box.size.z();
    corners[static_cast<std::size_t>(i)] =
        box.center + Vec3(c * lx - s * ly, s * lx + c * ly, lz);
  }
  return corners;
}

ProjectedBox project_box(const ObjectBox3D& box, const CameraCalib& calib, std::size_t width,
                         std::size_t height) {
  const Projector projector(calib);
  std::array<Vec3, 8> camera;
  const auto corners = box_corners(box);
  for (std::size_t i = 0; i < 8; ++i) camera[i] = projector.to_camera(corners[i]);

  ProjectedBox out;
  for (const auto& [i, j] : kBoxEdges) {
    const auto seg = clip_near(camera[static_cast<std::size_t>(i)], camera[static_cast<std::size_t>(j)]);
    if (!seg) continue;
    const ProjectedPoint a = project_point(projector, seg->a);
    const ProjectedPoint b = project_point(projector, seg->b);
    out.edges.push_back({a, b});
    out.vertices.push_back(a);
    out.vertices.push_back(b);
  }
  if (out.edges.empty()) return {};

  double xmin = out.vertices[0].pixel.x(), xmax = xmin;
  double ymin = out.vertices[0].pixel.y(), ymax = ymin;
  out.nearest_depth = out.vertices[0].depth;
  for (const ProjectedPoint& p : out.vertices) {
    xmin = std::min(xmin, p.pixel.x());
    xmax = std::max(xmax, p.pixel.x());
    ymin = std::min(ymin, p.pixel.y());
    ymax = std::max(ymax, p.pixel.y());
    out.nearest_depth = std::min(out.nearest_depth, p.depth);
  }
  const double w = static_cast<double>(width);
  const double h = static_cast<double>(height);
  if (xmax < -0.5 || ymax < -0.5 || xmin > w - 0.5 || ymin > h - 0.5) return {};
  return out;
}

std::size_t depth_bin(double depth, double d_max) {
  const double step = d_max / static_cast<double>(kDepthBins);
  const double k = std::ceil(depth / step) - 1.0;
  if (!(k > 0.0)) return 0;
  return std::min(static_cast<std::size_t>(k), kDepthBins - 1);
}

LayoutImage rasterize_frame(const SceneSequence& scene, std::size_t frame, std::size_t view,
                            const RenderOptions& options) {
  if (frame >= scene.frames.size()) {
    throw IndexError("frame " + std::to_string(frame) + " out of range (" +
                     std::to_string(scene.frames.size()) + " frames)");
  }
  if (view >= scene.views) {
    throw IndexError("view " + std::to_string(view) + " out of range (" +
                     std::to_string(scene.views) + " views)");
  }
  if (options.width < 8 || options.height < 8) throw ConfigError("layout images must be at least 8x8");
  if (!(options.d_max > 0.0)) throw ConfigError("d_max must be positive");

  const SceneFrame& record = scene.frames[frame];
  const CameraCalib& calib = record.cameras[view];
  LayoutImage image{options.width, options.height,
                    std::vector<float>(options.width * options.height * kControlChannels, 0.0F)};
  FramePainter painter(image);

  const Unprojector unprojector(calib);
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      const Vec3 color = pseudocolor(unprojector.direction(static_cast<double>(x), static_cast<double>(y)));
      for (std::size_t c = 0; c < 3; ++c) {
        painter.set(static_cast<long>(x), static_cast<long>(y), kPoseChannel + c,
                    static_cast<float>(color[static_cast<Eigen::Index>(c)]));
      }
    }
  }

  const Projector projector(calib);
  for (const RoadPolyline& road : record.roads) {
    const Rgb color = options.palette.lane(road.lane_type);
    for (std::size_t i = 0; i + 1 < road.points.size(); ++i) {
      const Vec3 a = projector.to_camera(Vec3(road.points[i].x(), road.points[i].y(), 0.0));
      const Vec3 b = projector.to_camera(Vec3(road.points[i + 1].x(), road.points[i + 1].y(), 0.0));
      const auto seg = clip_near(a, b);
      if (!seg) continue;
      painter.line(projector.to_pixel(seg->a), projector.to_pixel(seg->b), kRoadChannel, color);
    }
  }

  std::vector<ProjectedBox> projected;
  std::vector<std::size_t> order;
  for (const ObjectBox3D& box : record.boxes) {
    projected.push_back(project_box(box, calib, options.width, options.height));
    if (!projected.back().empty()) order.push_back(projected.size() - 1);
  }
  // Painter's order: farthest first so nearer boxes overwrite.
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return projected[a].nearest_depth > projected[b].nearest_depth;
  });
  for (std::size_t i : order) {
    paint_box(painter, image, projected[i], depth_bin(projected[i].nearest_depth, options.d_max),
              options.palette.category(record.boxes[i].category_id));
  }
  return image;
}

ControlTensor::ControlTensor(std::size_t views, std::size_t frames, std::size_t height,
                             std::size_t width)
    : views_(views),
      frames_(frames),
      height_(height),
      width_(width),
      values_(views * frames * height * width * kControlChannels, 0.0F) {}

void ControlTensor::set_slice(std::size_t v, std::size_t t, const LayoutImage& image) {
  if (image.width != width_ || image.height != height_) throw ShapeError("layout image size mismatch");
  std::copy(image.values.begin(), image.values.end(), values_.begin() + static_cast<std::ptrdiff_t>(offset(v, t)));
}

ControlTensor ControlTensor::frames_range(std::size_t first, std::size_t count) const {
  if (first + count > frames_) throw IndexError("control frame range out of bounds");
  ControlTensor out(views_, count, height_, width_);
  const std::size_t slice = height_ * width_ * kControlChannels;
  for (std::size_t v = 0; v < views_; ++v) {
    for (std::size_t t = 0; t < count; ++t) {
      const float* src = this->slice(v, first + t);
      std::copy(src, src + slice, out.values_.begin() + static_cast<std::ptrdiff_t>(out.offset(v, t)));
    }
  }
  return out;
}

ControlTensor render_sequence(const SceneSequence& scene, const RenderOptions& options) {
  ControlTensor out(scene.views, scene.frames.size(), options.height, options.width);
  const std::size_t jobs = scene.views * scene.frames.size();
  parallel_for(jobs, [&](std::size_t job) {
    const std::size_t t = job / scene.views;
    const std::size_t v = job % scene.views;
    out.set_slice(v, t, rasterize_frame(scene, t, v, options));
  });
  return out;
}

void write_control_tensor(const std::filesystem::path& path, const ControlTensor& tensor) {
  const auto dims = tensor.dims();
  write_pnc1(path, dims, tensor.values());
}

ControlTensor read_control_tensor(const std::filesystem::path& path) {
  Pnc1Tensor blob = read_pnc1(path);
  if (blob.dims.size() != 5 || blob.dims[4] != kControlChannels) {
    throw ShapeError("control tensor must have dims (V, T, H, W, 19)");
  }
  ControlTensor out(blob.dims[0], blob.dims[1], blob.dims[2], blob.dims[3]);
  out.values() = std::move(blob.values);
  return out;
}

void write_control_previews(const std::filesystem::path& directory, const ControlTensor& tensor) {
  std::filesystem::create_directories(directory);
  const std::size_t pixels = tensor.height() * tensor.width();
  for (std::size_t v = 0; v < tensor.views(); ++v) {
    for (std::size_t t = 0; t < tensor.frames(); ++t) {
      const float* slice = tensor.slice(v, t);
      std::array<std::vector<std::uint8_t>, 4> groups;
      for (auto& g : groups) g.resize(pixels * 3);
      for (std::size_t p = 0; p < pixels; ++p) {
        const float* px = slice + p * kControlChannels;
        double depth_level = 0.0;
        for (std::size_t b = 0; b < kDepthBins; ++b) {
          if (px[kDepthChannel + b] > 0.0F) depth_level = 1.0 - static_cast<double>(b) / kDepthBins;
        }
        for (std::size_t c = 0; c < 3; ++c) {
          groups[0][p * 3 + c] = quantize_u8(depth_level);
          groups[1][p * 3 + c] = quantize_u8(px[kBoxChannel + c]);
          groups[2][p * 3 + c] = quantize_u8(px[kRoadChannel + c]);
          groups[3][p * 3 + c] = quantize_u8(px[kPoseChannel + c], 1.0);
        }
      }
      const std::string stem = "v" + std::to_string(v) + "_t" + std::to_string(t);
      constexpr std::array<const char*, 4> names = {"depth", "boxes", "roads", "pose"};
      for (std::size_t g = 0; g < groups.size(); ++g) {
        write_ppm(directory / (stem + "_" + names[g] + ".ppm"), tensor.width(), tensor.height(),
                  groups[g]);
      }
    }
  }
}

}  // namespace panoforge
