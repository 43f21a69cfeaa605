// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

namespace panoforge {

/// Tokens indexed by (frame t, view v, spatial position s), each a vector of
/// `width` reals. Flattened token index is (t * views + v) * positions + s.
class TokenGrid {
 public:
  TokenGrid() = default;
  TokenGrid(std::size_t frames, std::size_t views, std::size_t positions, std::size_t width,
            double fill = 0.0);

  std::size_t frames() const noexcept { return frames_; }
  std::size_t views() const noexcept { return views_; }
  std::size_t positions() const noexcept { return positions_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t tokens() const noexcept { return frames_ * views_ * positions_; }

  std::size_t token_index(std::size_t t, std::size_t v, std::size_t s) const noexcept {
    return (t * views_ + v) * positions_ + s;
  }
  double& at(std::size_t t, std::size_t v, std::size_t s, std::size_t c) {
    return values_[token_index(t, v, s) * width_ + c];
  }
  double at(std::size_t t, std::size_t v, std::size_t s, std::size_t c) const {
    return values_[token_index(t, v, s) * width_ + c];
  }

  bool same_dims(const TokenGrid& other) const noexcept {
    return frames_ == other.frames_ && views_ == other.views_ &&
           positions_ == other.positions_ && width_ == other.width_;
  }

  std::vector<double>& values() noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }

 private:
  std::size_t frames_ = 0;
  std::size_t views_ = 0;
  std::size_t positions_ = 0;
  std::size_t width_ = 0;
  std::vector<double> values_;
};

/// Which views each view's queries read in cross-view attention. A view is
/// never its own neighbor and neighbor lists hold no duplicates.
class ViewAdjacency {
 public:
  /// Ring rig: view v reads v - 1 and v + 1 modulo V.
  static ViewAdjacency cyclic(std::size_t views);
  static ViewAdjacency from_lists(std::vector<std::vector<std::size_t>> neighbors);

  std::size_t views() const noexcept { return neighbors_.size(); }
  const std::vector<std::size_t>& neighbors(std::size_t view) const { return neighbors_.at(view); }

 private:
  std::vector<std::vector<std::size_t>> neighbors_;
};

/// One softmax problem: every query attends over exactly `keys`.
struct AttentionGroup {
  std::vector<std::uint32_t> queries;
  std::vector<std::uint32_t> keys;
};

/// Partition of the queries into groups. Queries outside every group have no
/// keys and pass their query vector through unchanged.
struct AttentionPlan {
  std::size_t tokens = 0;
  std::vector<AttentionGroup> groups;
};

AttentionPlan intra_view_plan(std::size_t frames, std::size_t views, std::size_t positions);
AttentionPlan cross_view_plan(std::size_t frames, std::size_t views, std::size_t positions,
                              const ViewAdjacency& adjacency);
AttentionPlan cross_frame_plan(std::size_t frames, std::size_t views, std::size_t positions);

/// Dense per-head attention weights, [head][query][key]. Debug only.
struct AttentionWeights {
  std::size_t heads = 0;
  std::size_t tokens = 0;
  std::vector<double> values;

  double at(std::size_t head, std::size_t query, std::size_t key) const {
    return values[(head * tokens + query) * tokens + key];
  }
};

struct AttentionOptions {
  std::size_t heads = 1;
  AttentionWeights* weights = nullptr;  // filled when non-null
};

/// Softmax probabilities kept from a forward pass, one block per group laid
/// out [head][query][key].
using AttentionProbs = std::vector<std::vector<double>>;

/// Runs every group of the plan. q, k, v and out are token-major
/// (plan.tokens x width). The head dimension is width / heads and logits are
/// scaled by its inverse square root.
void attention_forward(const AttentionPlan& plan, std::size_t width, std::size_t heads,
                       const double* q, const double* k, const double* v, double* out,
                       AttentionProbs* probs = nullptr, AttentionWeights* weights = nullptr);

/// Accumulates gradients into dq, dk, dv given the forward probabilities.
void attention_backward(const AttentionPlan& plan, std::size_t width, std::size_t heads,
                        const double* q, const double* k, const double* v,
                        const AttentionProbs& probs, const double* d_out, double* dq, double* dk,
                        double* dv);

TokenGrid intra_view_attention(const TokenGrid& q, const TokenGrid& k, const TokenGrid& v,
                               const AttentionOptions& options = {});
TokenGrid cross_view_attention(const TokenGrid& q, const TokenGrid& k, const TokenGrid& v,
                               const ViewAdjacency& adjacency, const AttentionOptions& options = {});
TokenGrid cross_frame_attention(const TokenGrid& q, const TokenGrid& k, const TokenGrid& v,
                                const AttentionOptions& options = {});

/// Allowed (query, key) pairs over flattened token indices.
using AttnMask = std::function<bool(std::size_t query, std::size_t key)>;

/// Reference: full softmax over all tokens with disallowed logits at -inf.
/// Throws NumericError when a query has no allowed key.
TokenGrid joint_attention_oracle(const TokenGrid& q, const TokenGrid& k, const TokenGrid& v,
                                 const AttnMask& mask, const AttentionOptions& options = {});

/// Debug hook: dumps weights as PNC1 with dims (heads, tokens, tokens).
void write_attention_weights(const std::filesystem::path& path, const AttentionWeights& weights);

}  // namespace panoforge
