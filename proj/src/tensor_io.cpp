// SPDX-License-Identifier: Apache-2.0
#include "panoforge/tensor_io.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

#include "panoforge/error.hpp"

namespace panoforge {
namespace {

constexpr std::array<char, 4> kMagic = {'P', 'N', 'C', '1'};
constexpr std::uint32_t kMaxRank = 16;

template <typename U>
void put_le(std::ostream& out, U value) {
  std::array<char, sizeof(U)> bytes{};
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFFu);
  }
  out.write(bytes.data(), bytes.size());
}

template <typename U>
U get_le(std::istream& in) {
  std::array<unsigned char, sizeof(U)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw IoError("PNC1: truncated header");
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

std::uint64_t checked_count(std::span<const std::uint64_t> dims) {
  std::uint64_t count = 1;
  for (std::uint64_t d : dims) {
    if (d != 0 && count > std::numeric_limits<std::uint64_t>::max() / 4 / d) {
      throw IoError("PNC1: dims overflow");
    }
    count *= d;
  }
  return count;
}

std::vector<std::uint64_t> read_header(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw IoError("PNC1: bad magic");
  const auto ndim = get_le<std::uint32_t>(in);
  if (ndim > kMaxRank) throw IoError("PNC1: rank " + std::to_string(ndim) + " too large");
  std::vector<std::uint64_t> dims(ndim);
  for (auto& d : dims) d = get_le<std::uint64_t>(in);
  return dims;
}

}  // namespace

void write_pnc1(std::ostream& out, std::span<const std::uint64_t> dims,
                std::span<const float> values) {
  if (checked_count(dims) != values.size()) {
    throw ShapeError("PNC1: payload size does not match dims");
  }
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(dims.size()));
  for (std::uint64_t d : dims) put_le<std::uint64_t>(out, d);
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(float)));
  } else {
    for (float v : values) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  if (!out) throw IoError("PNC1: write failed");
}

void write_pnc1(const std::filesystem::path& path, std::span<const std::uint64_t> dims,
                std::span<const float> values) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_pnc1(out, dims, values);
}

void write_pnc1(const std::filesystem::path& path, const Tensor& tensor) {
  std::vector<std::uint64_t> dims(tensor.shape().begin(), tensor.shape().end());
  std::vector<float> values(tensor.size());
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<float>(tensor[i]);
  write_pnc1(path, dims, values);
}

Pnc1Tensor read_pnc1(std::istream& in) {
  Pnc1Tensor blob;
  blob.dims = read_header(in);
  const std::uint64_t count = checked_count(blob.dims);
  blob.values.resize(count);
  if constexpr (std::endian::native == std::endian::little) {
    in.read(reinterpret_cast<char*>(blob.values.data()),
            static_cast<std::streamsize>(count * sizeof(float)));
    if (!in) throw IoError("PNC1: truncated payload");
  } else {
    for (auto& v : blob.values) v = std::bit_cast<float>(get_le<std::uint32_t>(in));
  }
  return blob;
}

Pnc1Tensor read_pnc1(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_pnc1(in);
}

std::vector<std::uint64_t> read_pnc1_dims(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_header(in);
}

Tensor to_tensor(const Pnc1Tensor& blob) {
  std::vector<std::size_t> shape(blob.dims.begin(), blob.dims.end());
  std::vector<double> values(blob.values.begin(), blob.values.end());
  return Tensor(std::move(shape), std::move(values));
}

std::uint8_t quantize_u8(double value, double scale) {
  const double q = std::floor(value * scale + 0.5);
  if (!(q > 0.0)) return 0;
  return q >= 255.0 ? 255 : static_cast<std::uint8_t>(q);
}

void write_ppm(const std::filesystem::path& path, std::size_t width, std::size_t height,
               std::span<const std::uint8_t> rgb) {
  if (rgb.size() != width * height * 3) throw ShapeError("PPM: pixel buffer size mismatch");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "P6\n" << width << " " << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
  if (!out) throw IoError("PPM: write failed for " + path.string());
}

}  // namespace panoforge
