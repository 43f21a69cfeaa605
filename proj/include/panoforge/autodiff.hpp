// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "panoforge/attention.hpp"
#include "panoforge/tensor.hpp"

namespace panoforge::ad {

using Var = std::size_t;
inline constexpr Var kNone = static_cast<Var>(-1);

/// Reverse-mode tape. Ops run eagerly and, when recording, push a backward
/// closure. Image tensors are [N][C][H][W]; token tensors are [N*H*W][C].
class Tape {
 public:
  explicit Tape(bool record_gradients = true) : record_(record_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return record_; }

  Var constant(Tensor value);
  /// Leaf whose gradient is reported under `name`. Binding the same name twice
  /// is an error.
  Var parameter(const std::string& name, const Tensor& value);

  const Tensor& value(Var v) const { return nodes_.at(v).value; }
  /// Null when no gradient reached v.
  const Tensor* grad(Var v) const;

  /// Seeds d(out)/d(out) = 1 for a single-element output and runs the tape.
  void backward(Var out);
  std::map<std::string, Tensor> parameter_gradients() const;

  Var add(Var a, Var b);
  Var silu(Var x);
  Var conv2d(Var x, Var weight, Var bias, std::size_t stride, std::size_t padding);
  Var group_norm(Var x, Var gamma, Var beta, std::size_t groups, double eps = 1e-5);
  /// x * (1 + s[c]) + b[c] with scale_shift = [s_0..s_{C-1}, b_0..b_{C-1}].
  Var modulate(Var x, Var scale_shift);
  /// weight [out][in] times a vector, plus bias.
  Var linear(Var x, Var weight, Var bias);
  Var to_tokens(Var x);
  Var from_tokens(Var tokens, std::size_t height, std::size_t width);
  /// tokens [M][in] times weight [out][in]^T; bias may be kNone.
  Var token_linear(Var tokens, Var weight, Var bias);
  Var attention(Var q, Var k, Var v, std::shared_ptr<const AttentionPlan> plan,
                std::size_t heads);
  Var upsample_nearest(Var x, std::size_t factor);
  /// mean((pred - target)^2) as a one-element tensor.
  Var mse(Var pred, Var target);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    std::function<void()> backward;
  };

  Var push(Tensor value, std::initializer_list<Var> inputs);
  bool needs(Var v) const { return v != kNone && nodes_[v].needs_grad; }
  Tensor& grad_of(Var v);

  bool record_;
  std::vector<Node> nodes_;
  std::map<std::string, Var> params_;
};

}  // namespace panoforge::ad
