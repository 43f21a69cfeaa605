// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "panoforge/denoiser.hpp"

namespace panoforge {

struct AttentionTrial {
  std::uint64_t seed = 0;
  std::size_t frames = 0, views = 0, positions = 0, width = 0, heads = 0;
  double intra_deviation = 0.0;
  double view_deviation = 0.0;
  double frame_deviation = 0.0;
  bool passed = false;

  double max_deviation() const;
};

/// Random grid (T, V <= 4, S <= 9, c <= 8, heads dividing c) drawn from the
/// seed; each decomposed kernel is compared with the masked dense oracle.
/// `inject_fault` perturbs the cross-view output to exercise the checker.
AttentionTrial run_attention_trial(std::uint64_t seed, bool inject_fault = false, double tolerance = 1e-6);

/// Seed of trial i under a base seed; printed on failure for replay.
std::uint64_t trial_seed(std::uint64_t base_seed, std::size_t trial);

struct GradientSample {
  std::string parameter;
  std::size_t index = 0;
  std::string layer_type;
  double analytic = 0.0;
  double numeric = 0.0;
  double relative_error = 0.0;
};

struct GradientCheck {
  std::vector<GradientSample> samples;
  std::set<std::string> layer_types;
  double max_relative_error = 0.0;
  bool passed = false;
};

/// Layer family of a parameter name (conv, norm, attention, feedforward,
/// modulation, time, text, control_adapter, control_projection).
std::string layer_type(const std::string& parameter);

/// Central differences against the analytic gradient of the training loss on
/// the tiny network (two views, two frames, control and text present, control
/// projections moved off zero). Parameters are drawn round-robin over layer
/// families.
GradientCheck run_gradient_check(std::uint64_t seed, std::size_t samples = 50, double h = 1e-4,
                                 double tolerance = 1e-3);

struct OracleCheckReport {
  std::size_t trials = 0;
  double max_attention_deviation = 0.0;
  std::optional<std::uint64_t> failing_seed;
  std::optional<GradientCheck> gradient;
  bool passed = false;
};

struct OracleCheckOptions {
  std::size_t trials = 100;
  std::uint64_t seed = 0;
  bool inject_fault = false;
  bool gradient_suite = true;
  std::size_t gradient_samples = 50;
};

OracleCheckReport run_oracle_check(const OracleCheckOptions& options);

}  // namespace panoforge
