// SPDX-License-Identifier: Apache-2.0
#pragma once

// PNC1 binary tensor format:
//   bytes 0..3   magic "PNC1"
//   u32 LE       ndim
//   ndim x u64 LE dims
//   row-major f32 LE payload (product of dims values)

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "panoforge/tensor.hpp"

namespace panoforge {

struct Pnc1Tensor {
  std::vector<std::uint64_t> dims;
  std::vector<float> values;
};

void write_pnc1(std::ostream& out, std::span<const std::uint64_t> dims,
                std::span<const float> values);
void write_pnc1(const std::filesystem::path& path, std::span<const std::uint64_t> dims,
                std::span<const float> values);

/// Narrows a double tensor to f32 on the way out.
void write_pnc1(const std::filesystem::path& path, const Tensor& tensor);

Pnc1Tensor read_pnc1(std::istream& in);
Pnc1Tensor read_pnc1(const std::filesystem::path& path);

/// Reads only the header; leaves the payload unread.
std::vector<std::uint64_t> read_pnc1_dims(const std::filesystem::path& path);

Tensor to_tensor(const Pnc1Tensor& blob);

/// Round-half-up quantization of value * scale to [0, 255].
std::uint8_t quantize_u8(double value, double scale = 255.0);

/// Binary PPM (P6); rgb holds width * height * 3 bytes.
void write_ppm(const std::filesystem::path& path, std::size_t width, std::size_t height,
               std::span<const std::uint8_t> rgb);

}  // namespace panoforge
