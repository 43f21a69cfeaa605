// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "panoforge/codec.hpp"
#include "panoforge/error.hpp"
#include "panoforge/rng.hpp"

using namespace panoforge;

namespace {

VideoFrames random_frames(std::size_t v, std::size_t t, std::size_t h, std::size_t w, std::uint64_t seed) {
  VideoFrames f(v, t, h, w);
  SeededRng rng(seed);
  for (float& x : f.values()) x = static_cast<float>(rng.below(256)) / 255.0f;
  return f;
}

}  // namespace

TEST(Codec, ExactRoundTripOnEightBitImages) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const VideoFrames f = random_frames(2, 3, 16, 24, seed);
    EXPECT_TRUE(decode_exact(encode_exact(f)) == f) << "seed " << seed;
  }
}

TEST(Codec, ExactRoundTripOnRawIntegersAndSmoothRamps) {
  VideoFrames ints = random_frames(1, 1, 8, 8, 9);
  for (float& x : ints.values()) x = std::round(x * 255.0f);
  EXPECT_TRUE(decode_exact(encode_exact(ints)) == ints);

  VideoFrames ramp(1, 2, 16, 16);
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t y = 0; y < 16; ++y)
      for (std::size_t x = 0; x < 16; ++x)
        for (std::size_t c = 0; c < 3; ++c) ramp.at(0, t, y, x, c) = static_cast<float>((x + 2 * y + c + t) % 256) / 255.0f;
  EXPECT_TRUE(decode_exact(encode_exact(ramp)) == ramp);
}

TEST(Codec, FullResolutionLatentDims) {
  const VideoFrames f(1, 1, 256, 512);
  const LatentVideo z = encode_frames(f);
  EXPECT_EQ(z.height(), 32u);
  EXPECT_EQ(z.view_width(), 64u);
  EXPECT_EQ(z.channels(), 4u);

  const VideoFrames six(6, 1, 256, 512);
  const LatentVideo pano = encode_frames(six);
  EXPECT_EQ(pano.pano_width(), 384u);
  EXPECT_EQ(pano.views(), 6u);
}

TEST(Codec, LatentChannelsAreScaledMeansAndGreenRamp) {
  VideoFrames f(1, 1, 8, 8);
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x) {
      f.at(0, 0, y, x, 0) = 0.5f;
      f.at(0, 0, y, x, 1) = y < 4 ? 1.0f : 0.0f;
      f.at(0, 0, y, x, 2) = 0.25f;
    }
  const LatentVideo z = encode_frames(f);
  // Orthonormal DC of an 8x8 block is 8 * mean; the latent keeps it times 1/8.
  EXPECT_DOUBLE_EQ(z.at(0, 0, 0, 0), 0.5);
  EXPECT_DOUBLE_EQ(z.at(0, 0, 0, 1), 0.5);
  EXPECT_DOUBLE_EQ(z.at(0, 0, 0, 2), 0.25);
  EXPECT_DOUBLE_EQ(z.at(0, 0, 0, 3), 0.5);  // top-minus-bottom: (32 - 0) / 8 / 8
  // Zero-detail decode reproduces this image exactly.
  EXPECT_TRUE(decode_frames(z) == f);
}

TEST(Codec, LatentViewsConcatenateAlongWidth) {
  const VideoFrames f = random_frames(3, 2, 8, 16, 4);
  const LatentVideo z = encode_frames(f);
  for (std::size_t v = 0; v < 3; ++v) {
    VideoFrames single(1, 2, 8, 16);
    for (std::size_t t = 0; t < 2; ++t)
      for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t x = 0; x < 16; ++x)
          for (std::size_t c = 0; c < 3; ++c) single.at(0, t, y, x, c) = f.at(v, t, y, x, c);
    const LatentVideo zs = encode_frames(single);
    for (std::size_t t = 0; t < 2; ++t)
      for (std::size_t x = 0; x < 2; ++x)
        for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(z.at_view(t, v, 0, x, c), zs.at(t, 0, x, c));
  }
}

TEST(Codec, RejectsIndivisibleDims) {
  EXPECT_THROW(encode_frames(VideoFrames(1, 1, 12, 16)), ShapeError);
  EXPECT_THROW(encode_exact(VideoFrames(1, 1, 16, 20)), ShapeError);
  CodedVideo broken = encode_exact(VideoFrames(1, 1, 8, 8));
  broken.detail.pop_back();
  EXPECT_THROW(decode_exact(broken), ShapeError);
}

TEST(VideoFramesIo, Pnc1RoundTripAndViews) {
  const VideoFrames f = random_frames(2, 2, 8, 8, 3);
  const auto path = std::filesystem::temp_directory_path() / "panoforge_codec_frames.pnc1";
  write_video_frames(path, f);
  EXPECT_TRUE(read_video_frames(path) == f);
  std::filesystem::remove(path);

  const std::vector<float> pano = f.panorama(1);
  ASSERT_EQ(pano.size(), 8u * 16u * 3u);
  EXPECT_EQ(pano[(3 * 16 + 9) * 3 + 2], f.at(1, 1, 3, 1, 2));
  const std::vector<float> views = f.frame_views(1);
  EXPECT_EQ(views[((1 * 8 + 3) * 8 + 1) * 3 + 2], f.at(1, 1, 3, 1, 2));
}
