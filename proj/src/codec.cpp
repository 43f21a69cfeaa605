// SPDX-License-Identifier: Apache-2.0
#include "panoforge/codec.hpp"

#include <string>

#include "panoforge/error.hpp"
#include "panoforge/tensor_io.hpp"

namespace panoforge {
namespace {

constexpr std::size_t kF = LatentCodec::kFactor;
constexpr std::size_t kArea = kF * kF;
// Latent channel -> (color, coefficient).
constexpr std::size_t kLatentColor[LatentCodec::kLatentChannels] = {0, 1, 2, 1};
constexpr std::size_t kLatentCoeff[LatentCodec::kLatentChannels] = {0, 0, 0, 32};

// In-place orthonormal Walsh-Hadamard over 64 values (Sylvester order).
void hadamard64(double* x) {
  for (std::size_t len = 1; len < kArea; len <<= 1) {
    for (std::size_t i = 0; i < kArea; i += 2 * len) {
      for (std::size_t j = i; j < i + len; ++j) {
        const double a = x[j], b = x[j + len];
        x[j] = a + b;
        x[j + len] = a - b;
      }
    }
  }
  for (std::size_t i = 0; i < kArea; ++i) x[i] *= 0.125;
}

int latent_slot(std::size_t color, std::size_t coeff) {
  for (std::size_t c = 0; c < LatentCodec::kLatentChannels; ++c) {
    if (kLatentColor[c] == color && kLatentCoeff[c] == coeff) return static_cast<int>(c);
  }
  return -1;
}

void check_dims(const VideoFrames& frames) {
  if (frames.height() == 0 || frames.width() == 0 || frames.height() % kF != 0 || frames.width() % kF != 0) {
    throw ShapeError("frame size " + std::to_string(frames.height()) + "x" + std::to_string(frames.width()) +
                     " does not divide by the codec factor 8");
  }
}

LatentShape latent_shape_for(const VideoFrames& frames) {
  return LatentShape{frames.frames(), frames.height() / kF, frames.width() / kF, frames.views(),
                     LatentCodec::kLatentChannels};
}

}  // namespace

VideoFrames::VideoFrames(std::size_t views, std::size_t frames, std::size_t height, std::size_t width, float fill)
    : views_(views), frames_(frames), height_(height), width_(width), values_(views * frames * height * width * 3, fill) {}

std::vector<float> VideoFrames::frame_views(std::size_t t) const {
  if (t >= frames_) throw IndexError("frame " + std::to_string(t) + " out of range");
  std::vector<float> out;
  out.reserve(views_ * height_ * width_ * 3);
  for (std::size_t v = 0; v < views_; ++v) {
    const auto begin = values_.begin() + static_cast<std::ptrdiff_t>(index(v, t, 0, 0, 0));
    out.insert(out.end(), begin, begin + static_cast<std::ptrdiff_t>(height_ * width_ * 3));
  }
  return out;
}

std::vector<float> VideoFrames::panorama(std::size_t t) const {
  if (t >= frames_) throw IndexError("frame " + std::to_string(t) + " out of range");
  std::vector<float> out(height_ * views_ * width_ * 3);
  const std::size_t pano = views_ * width_;
  for (std::size_t v = 0; v < views_; ++v)
    for (std::size_t y = 0; y < height_; ++y)
      for (std::size_t x = 0; x < width_; ++x)
        for (std::size_t c = 0; c < 3; ++c) out[(y * pano + v * width_ + x) * 3 + c] = at(v, t, y, x, c);
  return out;
}

void write_video_frames(const std::filesystem::path& path, const VideoFrames& frames) {
  const auto dims = frames.dims();
  write_pnc1(path, dims, frames.values());
}

VideoFrames read_video_frames(const std::filesystem::path& path) {
  Pnc1Tensor blob = read_pnc1(path);
  if (blob.dims.size() != 5 || blob.dims[4] != 3) throw ShapeError(path.string() + ": expected dims (V, T, H, W, 3)");
  VideoFrames out(blob.dims[0], blob.dims[1], blob.dims[2], blob.dims[3]);
  out.values() = std::move(blob.values);
  return out;
}

CodedVideo encode_exact(const VideoFrames& frames) {
  check_dims(frames);
  const LatentShape shape = latent_shape_for(frames);
  CodedVideo coded{LatentVideo(shape), {}};
  const std::size_t patches = shape.frames * shape.views * shape.height * shape.view_width;
  coded.detail.resize(patches * LatentCodec::kDetailCoefficients);
  double coeff[3][kArea];
  std::size_t patch = 0;
  for (std::size_t t = 0; t < shape.frames; ++t) {
    for (std::size_t v = 0; v < shape.views; ++v) {
      for (std::size_t py = 0; py < shape.height; ++py) {
        for (std::size_t px = 0; px < shape.view_width; ++px, ++patch) {
          for (std::size_t c = 0; c < 3; ++c) {
            for (std::size_t i = 0; i < kArea; ++i) coeff[c][i] = frames.at(v, t, py * kF + i / kF, px * kF + i % kF, c);
            hadamard64(coeff[c]);
          }
          double* detail = coded.detail.data() + patch * LatentCodec::kDetailCoefficients;
          for (std::size_t c = 0; c < 3; ++c) {
            for (std::size_t k = 0; k < kArea; ++k) {
              const int slot = latent_slot(c, k);
              if (slot >= 0) coded.latent.at_view(t, v, py, px, static_cast<std::size_t>(slot)) = coeff[c][k] * 0.125;
              else *detail++ = coeff[c][k];
            }
          }
        }
      }
    }
  }
  return coded;
}

LatentVideo encode_frames(const VideoFrames& frames) { return encode_exact(frames).latent; }

VideoFrames decode_exact(const CodedVideo& coded) {
  const LatentShape& shape = coded.latent.shape();
  if (shape.channels != LatentCodec::kLatentChannels) throw ShapeError("codec latent must have 4 channels");
  const std::size_t patches = shape.frames * shape.views * shape.height * shape.view_width;
  const bool has_detail = !coded.detail.empty();
  if (has_detail && coded.detail.size() != patches * LatentCodec::kDetailCoefficients) {
    throw ShapeError("codec detail size does not match the latent");
  }
  VideoFrames out(shape.views, shape.frames, shape.height * kF, shape.view_width * kF);
  double coeff[3][kArea];
  std::size_t patch = 0;
  for (std::size_t t = 0; t < shape.frames; ++t) {
    for (std::size_t v = 0; v < shape.views; ++v) {
      for (std::size_t py = 0; py < shape.height; ++py) {
        for (std::size_t px = 0; px < shape.view_width; ++px, ++patch) {
          const double* detail = has_detail ? coded.detail.data() + patch * LatentCodec::kDetailCoefficients : nullptr;
          for (std::size_t c = 0; c < 3; ++c) {
            for (std::size_t k = 0; k < kArea; ++k) {
              const int slot = latent_slot(c, k);
              if (slot >= 0) coeff[c][k] = coded.latent.at_view(t, v, py, px, static_cast<std::size_t>(slot)) * 8.0;
              else coeff[c][k] = detail ? *detail++ : 0.0;
            }
            hadamard64(coeff[c]);
            for (std::size_t i = 0; i < kArea; ++i) {
              out.at(v, t, py * kF + i / kF, px * kF + i % kF, c) = static_cast<float>(coeff[c][i]);
            }
          }
        }
      }
    }
  }
  return out;
}

VideoFrames decode_frames(const LatentVideo& latent) { return decode_exact(CodedVideo{latent, {}}); }

}  // namespace panoforge
