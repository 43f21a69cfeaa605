// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace panoforge {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or latent shapes that do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A computation that cannot produce a finite result (singular matrix,
/// zero-length direction, vanishing schedule coefficient).
class NumericError : public Error {
 public:
  using Error::Error;
};

/// An index outside its valid range (frame, view, step).
class IndexError : public Error {
 public:
  using Error::Error;
};

/// Invalid run or model configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Training data that cannot satisfy a stage's preconditions.
class DatasetError : public Error {
 public:
  using Error::Error;
};

/// File system and stream failures, including malformed binary tensors.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace panoforge
