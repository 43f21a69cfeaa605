// SPDX-License-Identifier: Apache-2.0
#include "panoforge/scene.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "json.hpp"
#include "panoforge/rng.hpp"

namespace panoforge {

using nlohmann::json;

namespace {

constexpr double kMinDeterminant = 1e-9;
constexpr std::uint64_t kEmbeddingSeed = 0x7E47A77Bu;

constexpr std::array<std::string_view, 16> kVocabulary = {
    "sunny", "cloudy", "rainy", "foggy",    "snowy",        "day",
    "dawn",  "dusk",   "night", "urban",    "suburban",     "highway",
    "rural", "parking", "construction", "intersection"};

std::string_view kind_name(SceneError::Kind kind) {
  switch (kind) {
    case SceneError::Kind::syntax: return "syntax error";
    case SceneError::Kind::schema: return "schema error";
    case SceneError::Kind::invariant: return "invariant violation";
  }
  return "error";
}

std::string format_message(SceneError::Kind kind, const std::string& path,
                           const std::string& detail, std::size_t line, std::size_t column) {
  std::ostringstream os;
  os << kind_name(kind);
  if (line > 0) os << " at line " << line << ", column " << column;
  if (!path.empty()) os << " at " << path;
  os << ": " << detail;
  return os.str();
}

[[noreturn]] void schema_error(const std::string& path, const std::string& detail) {
  throw SceneError(SceneError::Kind::schema, path, detail);
}

[[noreturn]] void invariant_error(const std::string& path, const std::string& detail) {
  throw SceneError(SceneError::Kind::invariant, path, detail);
}

const json& require(const json& object, const char* key, const std::string& path) {
  if (!object.is_object()) schema_error(path, "expected an object");
  auto it = object.find(key);
  if (it == object.end()) schema_error(path + "." + key, "missing required field");
  return *it;
}

const json& require_array(const json& object, const char* key, const std::string& path) {
  const json& value = require(object, key, path);
  if (!value.is_array()) schema_error(path + "." + key, "expected an array");
  return value;
}

double number(const json& value, const std::string& path) {
  if (!value.is_number()) schema_error(path, "expected a number");
  const double x = value.get<double>();
  if (!std::isfinite(x)) invariant_error(path, "value is not finite");
  return x;
}

std::int64_t integer(const json& value, const std::string& path) {
  if (!value.is_number_integer()) schema_error(path, "expected an integer");
  return value.get<std::int64_t>();
}

template <std::size_t N>
std::array<double, N> fixed_numbers(const json& value, const std::string& path) {
  if (!value.is_array()) schema_error(path, "expected an array");
  if (value.size() != N) {
    schema_error(path, "expected " + std::to_string(N) + " numbers, got " +
                           std::to_string(value.size()));
  }
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = number(value[i], path + "[" + std::to_string(i) + "]");
  return out;
}

Mat4 matrix(const json& value, const std::string& path) {
  const auto v = fixed_numbers<16>(value, path);
  Mat4 m;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) m(r, c) = v[static_cast<std::size_t>(r * 4 + c)];
  return m;
}

LaneType lane_type(const json& value, const std::string& path) {
  if (!value.is_string()) schema_error(path, "expected a string");
  const auto& s = value.get_ref<const std::string&>();
  if (s == "divider") return LaneType::divider;
  if (s == "boundary") return LaneType::boundary;
  if (s == "crossing") return LaneType::crossing;
  invariant_error(path, "unknown lane_type '" + s + "'");
}

CameraCalib parse_camera(const json& j, const std::string& path) {
  return {matrix(require(j, "intrinsic", path), path + ".intrinsic"),
          matrix(require(j, "extrinsic", path), path + ".extrinsic")};
}

ObjectBox3D parse_box(const json& j, const std::string& path) {
  ObjectBox3D box;
  const auto c = fixed_numbers<3>(require(j, "center", path), path + ".center");
  const auto s = fixed_numbers<3>(require(j, "size", path), path + ".size");
  box.center = Vec3(c[0], c[1], c[2]);
  box.size = Vec3(s[0], s[1], s[2]);
  box.yaw = number(require(j, "yaw", path), path + ".yaw");
  const std::int64_t category = integer(require(j, "category_id", path), path + ".category_id");
  if (category < 0 || category > 65535) invariant_error(path + ".category_id", "out of range");
  box.category_id = static_cast<int>(category);
  box.track_id = integer(require(j, "track_id", path), path + ".track_id");
  return box;
}

RoadPolyline parse_road(const json& j, const std::string& path) {
  RoadPolyline road;
  const json& points = require_array(j, "points", path);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto p = fixed_numbers<2>(points[i], path + ".points[" + std::to_string(i) + "]");
    road.points.emplace_back(p[0], p[1]);
  }
  road.lane_type = lane_type(require(j, "lane_type", path), path + ".lane_type");
  return road;
}

std::pair<std::size_t, std::size_t> line_column(std::string_view text, std::size_t byte) {
  const std::size_t end = std::min(byte > 0 ? byte - 1 : 0, text.size());
  std::size_t line = 1;
  std::size_t column = 1;
  for (std::size_t i = 0; i < end; ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  return {line, column};
}

json matrix_json(const Mat4& m) {
  json out = json::array();
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) out.push_back(m(r, c));
  return out;
}

void check_calibration_matrix(const Mat4& m, const std::string& path) {
  if (!m.allFinite()) invariant_error(path, "non-finite entry");
  if (m(3, 0) != 0.0 || m(3, 1) != 0.0 || m(3, 2) != 0.0 || m(3, 3) != 1.0) {
    invariant_error(path, "bottom row must be (0, 0, 0, 1)");
  }
  if (std::abs(m.determinant()) <= kMinDeterminant) invariant_error(path, "matrix is not invertible");
}

}  // namespace

std::string_view to_string(LaneType type) {
  switch (type) {
    case LaneType::divider: return "divider";
    case LaneType::boundary: return "boundary";
    case LaneType::crossing: return "crossing";
  }
  return "divider";
}

SceneError::SceneError(Kind kind, std::string path, std::string detail, std::size_t line,
                       std::size_t column)
    : Error(format_message(kind, path, detail, line, column)),
      kind_(kind),
      path_(std::move(path)),
      line_(line),
      column_(column) {}

bool operator==(const CameraCalib& a, const CameraCalib& b) {
  return a.intrinsic == b.intrinsic && a.extrinsic == b.extrinsic;
}

bool operator==(const ObjectBox3D& a, const ObjectBox3D& b) {
  return a.center == b.center && a.size == b.size && a.yaw == b.yaw &&
         a.category_id == b.category_id && a.track_id == b.track_id;
}

bool operator==(const RoadPolyline& a, const RoadPolyline& b) {
  return a.lane_type == b.lane_type && a.points == b.points;
}

bool operator==(const SceneFrame& a, const SceneFrame& b) {
  return a.cameras == b.cameras && a.boxes == b.boxes && a.roads == b.roads;
}

bool operator==(const SceneSequence& a, const SceneSequence& b) {
  return a.views == b.views && a.frames == b.frames && a.attributes == b.attributes;
}

void validate_scene(const SceneSequence& scene) {
  if (scene.views < 1) invariant_error("views", "at least one view is required");
  if (scene.frames.empty()) invariant_error("frames", "at least one frame is required");
  for (std::size_t t = 0; t < scene.frames.size(); ++t) {
    const SceneFrame& frame = scene.frames[t];
    const std::string fpath = "frames[" + std::to_string(t) + "]";
    if (frame.cameras.size() != scene.views) {
      invariant_error(fpath + ".cameras", "expected " + std::to_string(scene.views) +
                                              " cameras, got " +
                                              std::to_string(frame.cameras.size()));
    }
    for (std::size_t v = 0; v < frame.cameras.size(); ++v) {
      const std::string cpath = fpath + ".cameras[" + std::to_string(v) + "]";
      check_calibration_matrix(frame.cameras[v].intrinsic, cpath + ".intrinsic");
      check_calibration_matrix(frame.cameras[v].extrinsic, cpath + ".extrinsic");
    }
    for (std::size_t b = 0; b < frame.boxes.size(); ++b) {
      const ObjectBox3D& box = frame.boxes[b];
      const std::string bpath = fpath + ".boxes[" + std::to_string(b) + "]";
      if (!box.center.allFinite()) invariant_error(bpath + ".center", "non-finite coordinate");
      if (!box.size.allFinite() || (box.size.array() <= 0.0).any()) {
        invariant_error(bpath + ".size", "size components must be positive");
      }
      if (!(box.yaw >= -std::numbers::pi && box.yaw < std::numbers::pi)) {
        invariant_error(bpath + ".yaw", "yaw must lie in [-pi, pi)");
      }
      if (box.category_id < 0) invariant_error(bpath + ".category_id", "must be non-negative");
    }
    for (std::size_t r = 0; r < frame.roads.size(); ++r) {
      const RoadPolyline& road = frame.roads[r];
      const std::string rpath = fpath + ".roads[" + std::to_string(r) + "]";
      if (road.points.size() < 2) invariant_error(rpath + ".points", "at least two points required");
      for (const Vec2& p : road.points) {
        if (!p.allFinite()) invariant_error(rpath + ".points", "non-finite coordinate");
      }
    }
  }
}

SceneSequence parse_scene(std::string_view text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, column] = line_column(text, e.byte);
    throw SceneError(SceneError::Kind::syntax, "", e.what(), line, column);
  }

  SceneSequence scene;
  const std::int64_t views = integer(require(root, "views", ""), "views");
  if (views < 1) invariant_error("views", "at least one view is required");
  scene.views = static_cast<std::size_t>(views);

  const json& frames = require_array(root, "frames", "");
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const std::string fpath = "frames[" + std::to_string(t) + "]";
    const json& fj = frames[t];
    SceneFrame frame;
    const json& cameras = require_array(fj, "cameras", fpath);
    for (std::size_t v = 0; v < cameras.size(); ++v) {
      frame.cameras.push_back(parse_camera(cameras[v], fpath + ".cameras[" + std::to_string(v) + "]"));
    }
    const json& boxes = require_array(fj, "boxes", fpath);
    for (std::size_t b = 0; b < boxes.size(); ++b) {
      frame.boxes.push_back(parse_box(boxes[b], fpath + ".boxes[" + std::to_string(b) + "]"));
    }
    const json& roads = require_array(fj, "roads", fpath);
    for (std::size_t r = 0; r < roads.size(); ++r) {
      frame.roads.push_back(parse_road(roads[r], fpath + ".roads[" + std::to_string(r) + "]"));
    }
    scene.frames.push_back(std::move(frame));
  }

  const json& attributes = require_array(root, "attributes", "");
  for (std::size_t i = 0; i < attributes.size(); ++i) {
    if (!attributes[i].is_string()) {
      schema_error("attributes[" + std::to_string(i) + "]", "expected a string");
    }
    scene.attributes.push_back(attributes[i].get<std::string>());
  }

  validate_scene(scene);
  return scene;
}

SceneSequence load_scene(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read scene file " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) throw IoError("read failed for " + path.string());
  return parse_scene(buffer.str());
}

std::string serialize_scene(const SceneSequence& scene) {
  json root;
  root["views"] = scene.views;
  json frames = json::array();
  for (const SceneFrame& frame : scene.frames) {
    json fj;
    fj["cameras"] = json::array();
    for (const CameraCalib& cam : frame.cameras) {
      fj["cameras"].push_back(
          {{"intrinsic", matrix_json(cam.intrinsic)}, {"extrinsic", matrix_json(cam.extrinsic)}});
    }
    fj["boxes"] = json::array();
    for (const ObjectBox3D& box : frame.boxes) {
      fj["boxes"].push_back({{"center", {box.center.x(), box.center.y(), box.center.z()}},
                             {"size", {box.size.x(), box.size.y(), box.size.z()}},
                             {"yaw", box.yaw},
                             {"category_id", box.category_id},
                             {"track_id", box.track_id}});
    }
    fj["roads"] = json::array();
    for (const RoadPolyline& road : frame.roads) {
      json points = json::array();
      for (const Vec2& p : road.points) points.push_back({p.x(), p.y()});
      fj["roads"].push_back({{"points", points}, {"lane_type", to_string(road.lane_type)}});
    }
    frames.push_back(std::move(fj));
  }
  root["frames"] = std::move(frames);
  root["attributes"] = scene.attributes;
  return root.dump(2);
}

std::span<const std::string_view> attribute_vocabulary() { return kVocabulary; }

std::vector<double> text_attribute_embedding(std::span<const std::string> tags, std::size_t dim) {
  if (dim == 0) throw ConfigError("embedding dimension must be positive");

  // Bucket 0 is reserved for tags outside the vocabulary and for the empty set.
  std::set<std::size_t> buckets;
  for (const std::string& tag : tags) {
    const auto it = std::find(kVocabulary.begin(), kVocabulary.end(), tag);
    buckets.insert(it == kVocabulary.end()
                       ? 0
                       : static_cast<std::size_t>(std::distance(kVocabulary.begin(), it)) + 1);
  }
  if (buckets.empty()) buckets.insert(0);

  const SeededRng table(kEmbeddingSeed);
  std::vector<double> out(dim, 0.0);
  for (std::size_t bucket : buckets) {
    SeededRng row = table.split(static_cast<std::uint64_t>(bucket));
    for (double& x : out) x += row.normal();
  }
  double norm = 0.0;
  for (double x : out) norm += x * x;
  norm = std::sqrt(norm);
  if (norm == 0.0) {
    out.assign(dim, 0.0);
    out[0] = 1.0;
    return out;
  }
  for (double& x : out) x /= norm;
  return out;
}

}  // namespace panoforge
