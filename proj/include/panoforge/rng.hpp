// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace panoforge {

/// Counter-based generator built on the SplitMix64 finalizer.
///
/// The stream is a pure function of (seed, stream key, counter), so two
/// generators with the same seed replay the same values, and `split` derives
/// independent substreams by label without touching the parent's counter.
/// Gaussian draws use Box-Muller on our own uniforms, which keeps results
/// identical across standard library implementations.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed = 0) : seed_(seed), key_(mix(seed ^ kStreamSalt)) {}

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() noexcept {
    ++counter_;
    return mix(key_ + counter_ * kGolden);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) noexcept { return next_u64() % n; }

  double normal() noexcept {
    // (0, 1] keeps the logarithm finite.
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  SeededRng split(std::uint64_t label) const noexcept {
    SeededRng child(*this);
    child.key_ = mix(key_ ^ mix(label + kGolden));
    child.counter_ = 0;
    return child;
  }

  SeededRng split(std::string_view label) const noexcept { return split(fnv1a(label)); }

  /// Substream for one (frame, view) block of a latent.
  SeededRng split(std::uint64_t frame, std::uint64_t view) const noexcept {
    return split((frame << 32) ^ view ^ 0x5bd1e995ULL);
  }

  static constexpr std::uint64_t fnv1a(std::string_view text) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : text) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
    return h;
  }

 private:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
  static constexpr std::uint64_t kStreamSalt = 0xD1B54A32D192ED03ULL;

  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace panoforge
