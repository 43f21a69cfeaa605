// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <numbers>
#include <sstream>

#include "panoforge/rng.hpp"
#include "panoforge/scene.hpp"

using namespace panoforge;
using nlohmann::json;

namespace {

std::string fixture_text(const std::string& name) {
  std::ifstream in(std::filesystem::path(PANOFORGE_FIXTURES) / name);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

SceneError::Kind parse_error_kind(const std::string& text) {
  try {
    parse_scene(text);
  } catch (const SceneError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "parse succeeded";
  return SceneError::Kind::syntax;
}

SceneSequence random_scene(SeededRng& rng) {
  SceneSequence s;
  s.views = 1 + rng.below(3);
  const std::size_t frames = 1 + rng.below(3);
  for (std::size_t t = 0; t < frames; ++t) {
    SceneFrame f;
    for (std::size_t v = 0; v < s.views; ++v) {
      CameraCalib c;
      c.intrinsic(0, 0) = rng.uniform(10, 500);
      c.intrinsic(1, 1) = rng.uniform(10, 500);
      c.intrinsic(0, 2) = rng.uniform(-100, 100);
      c.intrinsic(1, 2) = rng.normal();
      const double a = rng.uniform(-3, 3);
      c.extrinsic.block<2, 2>(0, 0) << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
      c.extrinsic(0, 3) = rng.normal();
      c.extrinsic(2, 3) = 1.0 / 3.0;
      f.cameras.push_back(c);
    }
    for (std::uint64_t b = rng.below(4); b > 0; --b) {
      ObjectBox3D box;
      box.center = Vec3(rng.normal() * 20, rng.normal() * 20, rng.uniform());
      box.size = Vec3(rng.uniform(0.1, 5), rng.uniform(0.1, 3), rng.uniform(0.1, 2));
      box.yaw = rng.uniform(-std::numbers::pi, std::numbers::pi);
      box.category_id = static_cast<int>(rng.below(10));
      box.track_id = static_cast<std::int64_t>(rng.next_u64() >> 20) - (1LL << 40);
      f.boxes.push_back(box);
    }
    for (std::uint64_t r = rng.below(3); r > 0; --r) {
      RoadPolyline road;
      for (std::uint64_t p = 2 + rng.below(4); p > 0; --p) road.points.emplace_back(rng.normal() * 30, rng.normal() * 1e-7);
      road.lane_type = static_cast<LaneType>(rng.below(3));
      f.roads.push_back(road);
    }
    s.frames.push_back(f);
  }
  for (std::uint64_t a = rng.below(3); a > 0; --a) s.attributes.push_back("tag" + std::to_string(rng.below(100)));
  return s;
}

// Every key path in an object tree, each as a list of steps.
void collect_keys(const json& j, json::json_pointer at, std::vector<json::json_pointer>& out) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      out.push_back(at / it.key());
      collect_keys(it.value(), at / it.key(), out);
    }
  } else if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) collect_keys(j[i], at / i, out);
  }
}

}  // namespace

TEST(ParseScene, MinimalIdentityScene) {
  const SceneSequence s = parse_scene(fixture_text("minimal.json"));
  EXPECT_EQ(s.frame_count(), 1u);
  EXPECT_EQ(s.views, 1u);
  ASSERT_EQ(s.frames[0].cameras.size(), 1u);
  EXPECT_TRUE(s.frames[0].cameras[0].intrinsic.isIdentity());
  EXPECT_TRUE(s.frames[0].cameras[0].extrinsic.isIdentity());
  EXPECT_TRUE(s.frames[0].boxes.empty());
  EXPECT_TRUE(s.frames[0].roads.empty());
}

TEST(ParseScene, SixViewsEightFrames) {
  const SceneSequence s = parse_scene(fixture_text("drive_6x8.json"));
  EXPECT_EQ(s.frame_count(), 8u);
  EXPECT_EQ(s.views, 6u);
  for (const auto& f : s.frames) EXPECT_EQ(f.cameras.size(), 6u);
}

TEST(ParseScene, DeletedViewRecordIsInvariantViolation) {
  json j = json::parse(fixture_text("multiview.json"));
  j["frames"][1]["cameras"].erase(1);
  try {
    parse_scene(j.dump());
    FAIL() << "expected SceneError";
  } catch (const SceneError& e) {
    EXPECT_EQ(e.kind(), SceneError::Kind::invariant);
    EXPECT_NE(e.path().find("frames[1]"), std::string::npos) << e.path();
  }
}

TEST(ParseScene, SyntaxErrorCarriesLineAndColumn) {
  const std::string text = "{\n  \"views\": 1,\n  \"frames\": [,]\n}";
  try {
    parse_scene(text);
    FAIL() << "expected SceneError";
  } catch (const SceneError& e) {
    EXPECT_EQ(e.kind(), SceneError::Kind::syntax);
    EXPECT_EQ(e.line(), 3u);
    EXPECT_GT(e.column(), 0u);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

TEST(ParseScene, SchemaErrors) {
  json j = json::parse(fixture_text("single_box.json"));
  json wrong_arity = j;
  wrong_arity["frames"][0]["boxes"][0]["center"] = {1.0, 2.0};
  EXPECT_EQ(parse_error_kind(wrong_arity.dump()), SceneError::Kind::schema);

  json wrong_type = j;
  wrong_type["frames"][0]["boxes"][0]["yaw"] = "zero";
  EXPECT_EQ(parse_error_kind(wrong_type.dump()), SceneError::Kind::schema);

  json bad_lane = json::parse(fixture_text("boxes_roads.json"));
  bad_lane["frames"][0]["roads"][0]["lane_type"] = "median";
  try {
    parse_scene(bad_lane.dump());
    FAIL() << "unknown lane type accepted";
  } catch (const SceneError& e) {
    EXPECT_NE(e.path().find("lane_type"), std::string::npos) << e.path();
  }
}

TEST(ParseScene, InvariantErrorsNameThePath) {
  json j = json::parse(fixture_text("single_box.json"));
  json singular = j;
  singular["frames"][0]["cameras"][0]["intrinsic"][0] = 0.0;
  singular["frames"][0]["cameras"][0]["intrinsic"][2] = 0.0;
  try {
    parse_scene(singular.dump());
    FAIL();
  } catch (const SceneError& e) {
    EXPECT_EQ(e.kind(), SceneError::Kind::invariant);
    EXPECT_EQ(e.path(), "frames[0].cameras[0].intrinsic");
  }

  json bottom = j;
  bottom["frames"][0]["cameras"][0]["extrinsic"][12] = 0.5;
  EXPECT_EQ(parse_error_kind(bottom.dump()), SceneError::Kind::invariant);

  json flat = j;
  flat["frames"][0]["boxes"][0]["size"][2] = 0.0;
  EXPECT_EQ(parse_error_kind(flat.dump()), SceneError::Kind::invariant);

  json yaw = j;
  yaw["frames"][0]["boxes"][0]["yaw"] = std::numbers::pi;
  EXPECT_EQ(parse_error_kind(yaw.dump()), SceneError::Kind::invariant);

  json short_road = json::parse(fixture_text("boxes_roads.json"));
  short_road["frames"][0]["roads"][0]["points"] = json::array({json::array({0.0, 0.0})});
  EXPECT_EQ(parse_error_kind(short_road.dump()), SceneError::Kind::invariant);

  json no_frames = j;
  no_frames["frames"] = json::array();
  EXPECT_EQ(parse_error_kind(no_frames.dump()), SceneError::Kind::invariant);
}

TEST(ParseScene, DeletingAnyRequiredKeyIsRejected) {
  for (const char* name : {"boxes_roads.json", "multiview.json", "single_box.json"}) {
    const json base = json::parse(fixture_text(name));
    std::vector<json::json_pointer> keys;
    collect_keys(base, json::json_pointer(), keys);
    ASSERT_GT(keys.size(), 10u);
    for (const auto& key : keys) {
      json mutated = base;
      mutated[key.parent_pointer()].erase(key.back());
      EXPECT_THROW(parse_scene(mutated.dump()), SceneError) << name << " " << key.to_string();
    }
  }
}

TEST(SerializeScene, RoundTripIsFieldExact) {
  SeededRng rng(2024);
  for (int i = 0; i < 200; ++i) {
    const SceneSequence s = random_scene(rng);
    validate_scene(s);
    const SceneSequence back = parse_scene(serialize_scene(s));
    ASSERT_TRUE(back == s) << "scene " << i;
  }
  for (const char* name : {"drive_6x8.json", "boxes_roads.json", "minimal.json"}) {
    const SceneSequence s = parse_scene(fixture_text(name));
    EXPECT_TRUE(parse_scene(serialize_scene(s)) == s) << name;
  }
}

TEST(LoadScene, MissingFileIsIoError) {
  EXPECT_THROW(load_scene("/nonexistent/scene.json"), IoError);
  EXPECT_EQ(load_scene(std::filesystem::path(PANOFORGE_FIXTURES) / "pair_8.json").frame_count(), 8u);
}

TEST(TextEmbedding, DeterministicAndUnitNorm) {
  const std::vector<std::string> rainy{"rainy"};
  const auto a = text_attribute_embedding(rainy, 16);
  const auto b = text_attribute_embedding(rainy, 16);
  EXPECT_EQ(a, b);
  ASSERT_EQ(a.size(), 16u);
  double n = 0;
  for (double x : a) n += x * x;
  EXPECT_NEAR(std::sqrt(n), 1.0, 1e-6);
}

TEST(TextEmbedding, DistinctTagsDiffer) {
  const std::vector<std::string> rainy{"rainy"}, sunny{"sunny"};
  EXPECT_NE(text_attribute_embedding(rainy, 16), text_attribute_embedding(sunny, 16));
}

TEST(TextEmbedding, UnitNormForAnyTags) {
  SeededRng rng(9);
  for (std::size_t dim : {1u, 2u, 7u, 64u}) {
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<std::string> tags;
      for (std::uint64_t k = rng.below(5); k > 0; --k) tags.push_back("w" + std::to_string(rng.below(50)));
      if (trial % 3 == 0) tags.push_back("rainy");
      const auto v = text_attribute_embedding(tags, dim);
      double n = 0;
      for (double x : v) n += x * x;
      EXPECT_NEAR(std::sqrt(n), 1.0, 1e-6);
    }
  }
}

TEST(TextEmbedding, UnknownTagsShareReservedBucket) {
  const std::vector<std::string> a{"zzz-not-a-tag"}, b{"another-unknown"};
  EXPECT_EQ(text_attribute_embedding(a, 8), text_attribute_embedding(b, 8));
  EXPECT_FALSE(attribute_vocabulary().empty());
}

TEST(TextEmbedding, DuplicateTagsCountOnce) {
  const std::vector<std::string> once{"night"}, twice{"night", "night"};
  EXPECT_EQ(text_attribute_embedding(once, 12), text_attribute_embedding(twice, 12));
}

TEST(TextEmbedding, ZeroDimIsRejected) {
  const std::vector<std::string> tags{"day"};
  EXPECT_THROW(text_attribute_embedding(tags, 0), ConfigError);
}
