// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "panoforge/diffusion.hpp"

namespace panoforge {

/// RGB frames for every (view, frame), stored (V, T, H, W, 3) as float32.
class VideoFrames {
 public:
  VideoFrames() = default;
  VideoFrames(std::size_t views, std::size_t frames, std::size_t height, std::size_t width, float fill = 0.0f);

  std::size_t views() const noexcept { return views_; }
  std::size_t frames() const noexcept { return frames_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::array<std::uint64_t, 5> dims() const noexcept { return {views_, frames_, height_, width_, 3}; }

  float& at(std::size_t v, std::size_t t, std::size_t y, std::size_t x, std::size_t c) {
    return values_[index(v, t, y, x, c)];
  }
  float at(std::size_t v, std::size_t t, std::size_t y, std::size_t x, std::size_t c) const {
    return values_[index(v, t, y, x, c)];
  }

  std::vector<float>& values() noexcept { return values_; }
  const std::vector<float>& values() const noexcept { return values_; }

  /// One frame of every view, (V, H, W, 3).
  std::vector<float> frame_views(std::size_t t) const;
  /// Views of frame t side by side, (H, V*W, 3).
  std::vector<float> panorama(std::size_t t) const;

  friend bool operator==(const VideoFrames&, const VideoFrames&) = default;

 private:
  std::size_t index(std::size_t v, std::size_t t, std::size_t y, std::size_t x, std::size_t c) const noexcept {
    return (((v * frames_ + t) * height_ + y) * width_ + x) * 3 + c;
  }

  std::size_t views_ = 0;
  std::size_t frames_ = 0;
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<float> values_;
};

void write_video_frames(const std::filesystem::path& path, const VideoFrames& frames);
VideoFrames read_video_frames(const std::filesystem::path& path);

/// Exact patch codec. Each 8x8 RGB patch (192 values) is mixed per color by
/// an orthonormal Walsh-Hadamard transform; the latent keeps the three color
/// means and the green top-minus-bottom coefficient, scaled by 1/8. The other
/// 188 coefficients form the detail that makes decoding exact.
///
/// Every scale factor is a power of two, so a round trip is bit-exact when
/// pixels are float32 and the nonzero magnitudes in each patch span less than
/// 2^21 (true for 8-bit-derived images).
struct LatentCodec {
  static constexpr std::size_t kFactor = 8;
  static constexpr std::size_t kLatentChannels = 4;
  static constexpr std::size_t kPatchCoefficients = kFactor * kFactor * 3;
  static constexpr std::size_t kDetailCoefficients = kPatchCoefficients - kLatentChannels;
};

struct CodedVideo {
  LatentVideo latent;
  std::vector<double> detail;  // per patch, kDetailCoefficients values
};

CodedVideo encode_exact(const VideoFrames& frames);
/// Latent part only; views concatenate along the latent width.
LatentVideo encode_frames(const VideoFrames& frames);
VideoFrames decode_exact(const CodedVideo& coded);
/// Decodes with zero detail: each patch is its mean color plus a vertical
/// green ramp.
VideoFrames decode_frames(const LatentVideo& latent);

}  // namespace panoforge
