// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <Eigen/Geometry>
#include <cmath>
#include <numbers>

#include "panoforge/geometry.hpp"
#include "panoforge/rng.hpp"

using namespace panoforge;

namespace {

void expect_vec_near(const Eigen::VectorXd& got, const Eigen::VectorXd& want, double tol) {
  ASSERT_EQ(got.size(), want.size());
  EXPECT_LT((got - want).cwiseAbs().maxCoeff(), tol) << got.transpose() << " vs " << want.transpose();
}

Mat4 rotation(const Vec3& axis, double angle) {
  Mat4 m = Mat4::Identity();
  m.block<3, 3>(0, 0) = Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
  return m;
}

CameraCalib random_calib(SeededRng& rng) {
  CameraCalib c;
  c.intrinsic(0, 0) = rng.uniform(20, 400);
  c.intrinsic(1, 1) = rng.uniform(20, 400);
  c.intrinsic(0, 1) = rng.uniform(-2, 2);
  c.intrinsic(0, 2) = rng.uniform(0, 512);
  c.intrinsic(1, 2) = rng.uniform(0, 256);
  c.extrinsic = rotation(Vec3(rng.normal(), rng.normal(), rng.normal()), rng.uniform(-3, 3));
  c.extrinsic.block<3, 1>(0, 3) = Vec3(rng.normal(), rng.normal(), rng.normal());
  return c;
}

}  // namespace

TEST(Unproject, IdentityCalibration) {
  const CameraCalib id = CameraCalib::identity();
  expect_vec_near(unproject(0, 0, 1, id), Vec4(0, 0, 1, 1), 1e-12);
  expect_vec_near(unproject(3, 4, 2, id), Vec4(6, 8, 2, 1), 1e-12);
}

TEST(Unproject, DiagonalIntrinsic) {
  CameraCalib c;
  c.intrinsic.diagonal() << 2, 2, 1, 1;
  expect_vec_near(unproject(1, 1, 1, c), Vec4(0.5, 0.5, 1, 1), 1e-12);
}

TEST(Unproject, RejectsBadDepthAndSingularK) {
  EXPECT_THROW(unproject(0, 0, 0.0, CameraCalib::identity()), NumericError);
  EXPECT_THROW(unproject(0, 0, -1.0, CameraCalib::identity()), NumericError);
  CameraCalib singular;
  singular.intrinsic(0, 0) = 0.0;
  EXPECT_THROW(unproject(0, 0, 1.0, singular), NumericError);
}

TEST(Unproject, ProjectorInvertsIt) {
  SeededRng rng(5);
  for (int i = 0; i < 100; ++i) {
    const CameraCalib c = random_calib(rng);
    const double u = rng.uniform(0, 512), v = rng.uniform(0, 256), d = rng.uniform(0.5, 60);
    const Vec4 p = unproject(u, v, d, c);
    const Projector proj(c);
    const Vec3 cam = proj.to_camera(p.head<3>());
    EXPECT_NEAR(cam.z(), d, 1e-9);
    expect_vec_near(proj.to_pixel(cam), Vec2(u, v), 1e-8);
  }
}

TEST(DirectionVector, Examples) {
  const CameraCalib id = CameraCalib::identity();
  expect_vec_near(direction_vector(0, 0, id), Vec3(0, 0, 1), 1e-12);
  expect_vec_near(direction_vector(1, 0, id), Vec3(1, 0, 1) / std::sqrt(2.0), 1e-12);

  CameraCalib rotated;
  rotated.extrinsic = rotation(Vec3::UnitY(), std::numbers::pi / 2);
  const Vec3 dv = direction_vector(0, 0, rotated);
  expect_vec_near(dv, rotated.extrinsic.block<3, 3>(0, 0) * Vec3(0, 0, 1), 1e-12);
  expect_vec_near(dv, Vec3(1, 0, 0), 1e-12);
  EXPECT_NEAR(dv.norm(), 1.0, 1e-12);
}

TEST(DirectionVector, DegenerateDepthsThrow) {
  EXPECT_THROW(direction_vector(0, 0, CameraCalib::identity(), 1.0, 1.0), NumericError);
}

TEST(DirectionVector, IndependentOfDepthPair) {
  SeededRng rng(11);
  for (int i = 0; i < 500; ++i) {
    const CameraCalib c = random_calib(rng);
    const double u = rng.uniform(-50, 600), v = rng.uniform(-50, 300);
    expect_vec_near(direction_vector(u, v, c, 1.0, 2.0), direction_vector(u, v, c, 0.5, 3.7), 1e-9);
  }
}

TEST(DirectionVector, RigidMotionEquivariance) {
  SeededRng rng(12);
  for (int i = 0; i < 500; ++i) {
    CameraCalib c = random_calib(rng);
    const Mat4 r = rotation(Vec3(rng.normal(), rng.normal(), rng.normal()), rng.uniform(-3, 3));
    const double u = rng.uniform(0, 512), v = rng.uniform(0, 256);
    const Vec3 before = direction_vector(u, v, c);
    c.extrinsic = r * c.extrinsic;
    expect_vec_near(direction_vector(u, v, c), r.block<3, 3>(0, 0) * before, 1e-9);
  }
}

TEST(DirectionField, UnitNormEverywhereAndMatchesPointwise) {
  SeededRng rng(13);
  const CameraCalib c = random_calib(rng);
  const DirectionField f = direction_field(c, 40, 24);
  ASSERT_EQ(f.directions.size(), 40u * 24u);
  for (const Vec3& d : f.directions) EXPECT_NEAR(d.norm(), 1.0, 1e-9);
  expect_vec_near(f.at(17, 9), direction_vector(17, 9, c), 1e-12);
  expect_vec_near(f.at(0, 23), direction_vector(0, 23, c), 1e-12);
}

TEST(PseudoColor, Examples) {
  expect_vec_near(pseudocolor(Vec3(0, 0, 1)), Vec3(127.5, 127.5, 255), 1e-12);
  expect_vec_near(pseudocolor(Vec3(-1, 0, 0)), Vec3(0, 127.5, 127.5), 1e-12);
}

TEST(PseudoColor, ConstantFieldGivesConstantImage) {
  DirectionField f{5, 3, std::vector<Vec3>(15, Vec3(0.6, 0, 0.8))};
  const PseudoColorImage img = pose_pseudocolor(f);
  ASSERT_EQ(img.rgb.size(), 45u);
  for (std::size_t y = 0; y < 3; ++y) {
    for (std::size_t x = 0; x < 5; ++x) {
      EXPECT_DOUBLE_EQ(img.at(x, y, 0), 0.8 * 255);
      EXPECT_DOUBLE_EQ(img.at(x, y, 1), 127.5);
      EXPECT_DOUBLE_EQ(img.at(x, y, 2), 0.9 * 255);
    }
  }
}

TEST(PseudoColor, SphereGridStaysInRange) {
  DirectionField f;
  const std::size_t n_theta = 181, n_phi = 360;
  f.width = n_phi;
  f.height = n_theta;
  for (std::size_t i = 0; i < n_theta; ++i) {
    const double theta = std::numbers::pi * static_cast<double>(i) / (n_theta - 1);
    for (std::size_t j = 0; j < n_phi; ++j) {
      const double phi = 2 * std::numbers::pi * static_cast<double>(j) / n_phi;
      f.directions.emplace_back(std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi),
                                std::cos(theta));
    }
  }
  const PseudoColorImage img = pose_pseudocolor(f);
  for (double c : img.rgb) {
    ASSERT_TRUE(std::isfinite(c));
    ASSERT_GE(c, 0.0);
    ASSERT_LE(c, 255.0);
  }
}

TEST(RescaleIntrinsics, ScalesPixelRows) {
  SceneSequence s;
  SceneFrame f;
  CameraCalib c;
  c.intrinsic << 32, 0, 32, 0, 0, 32, 16, 0, 0, 0, 1, 0, 0, 0, 0, 1;
  f.cameras.push_back(c);
  s.frames.push_back(f);
  const SceneSequence r = rescale_intrinsics(s, 8.0, 8.0);
  const Mat4& k = r.frames[0].cameras[0].intrinsic;
  EXPECT_DOUBLE_EQ(k(0, 0), 256);
  EXPECT_DOUBLE_EQ(k(0, 2), 256);
  EXPECT_DOUBLE_EQ(k(1, 2), 128);
  EXPECT_DOUBLE_EQ(k(2, 2), 1);
  // A ray through the scaled pixel matches the original ray.
  expect_vec_near(direction_vector(80, 40, r.frames[0].cameras[0]), direction_vector(10, 5, c), 1e-12);
}
