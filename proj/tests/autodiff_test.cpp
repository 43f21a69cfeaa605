// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <memory>

#include "panoforge/autodiff.hpp"
#include "panoforge/error.hpp"
#include "panoforge/rng.hpp"

using namespace panoforge;
using panoforge::ad::Tape;
using panoforge::ad::Var;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, SeededRng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& x : t.values()) x = scale * rng.normal();
  return t;
}

using Inputs = std::map<std::string, Tensor>;
// Builds the graph from bound parameters and returns the output variable.
using Graph = std::function<Var(Tape&, const std::map<std::string, Var>&)>;

double evaluate(const Graph& g, const Inputs& in, const Tensor& target) {
  Tape tape(false);
  std::map<std::string, Var> vars;
  for (const auto& [name, t] : in) vars[name] = tape.constant(t);
  const Var out = g(tape, vars);
  return tape.value(tape.mse(out, tape.constant(target)))[0];
}

// Central differences on every element of every input against the tape.
void check_gradients(const Graph& g, const Inputs& in, SeededRng& rng, double tol = 1e-6) {
  Tensor target;
  {
    Tape probe(false);
    std::map<std::string, Var> vars;
    for (const auto& [name, t] : in) vars[name] = probe.constant(t);
    target = random_tensor(probe.value(g(probe, vars)).shape(), rng);
  }
  Tape tape;
  std::map<std::string, Var> vars;
  for (const auto& [name, t] : in) vars[name] = tape.parameter(name, t);
  const Var loss = tape.mse(g(tape, vars), tape.constant(target));
  tape.backward(loss);
  const auto grads = tape.parameter_gradients();
  const double h = 1e-5;
  for (const auto& [name, t] : in) {
    ASSERT_TRUE(grads.count(name)) << name;
    const Tensor& gt = grads.at(name);
    ASSERT_TRUE(gt.same_shape(t)) << name;
    for (std::size_t i = 0; i < t.size(); ++i) {
      Inputs plus = in, minus = in;
      plus[name][i] += h;
      minus[name][i] -= h;
      const double fd = (evaluate(g, plus, target) - evaluate(g, minus, target)) / (2 * h);
      EXPECT_NEAR(gt[i], fd, tol * std::max(1.0, std::abs(fd))) << name << "[" << i << "]";
    }
  }
}

}  // namespace

TEST(Tape, AddAndSilu) {
  SeededRng rng(1);
  const Inputs in{{"a", random_tensor({2, 3, 2, 2}, rng)}, {"b", random_tensor({2, 3, 2, 2}, rng)}};
  check_gradients([](Tape& t, const auto& v) { return t.silu(t.add(v.at("a"), v.at("b"))); }, in, rng);
}

TEST(Tape, Conv2dStrideAndPadding) {
  SeededRng rng(2);
  for (std::size_t stride : {1u, 2u}) {
    for (std::size_t pad : {0u, 1u}) {
      const Inputs in{{"x", random_tensor({2, 3, 5, 4}, rng)},
                      {"w", random_tensor({2, 3, 3, 3}, rng, 0.3)},
                      {"b", random_tensor({2}, rng)}};
      check_gradients(
          [=](Tape& t, const auto& v) { return t.conv2d(v.at("x"), v.at("w"), v.at("b"), stride, pad); }, in, rng);
    }
  }
}

TEST(Tape, Conv2dKnownValue) {
  Tape t(false);
  // 1x1 input channel, 3x3 ones kernel, padding 1: output counts neighbors.
  const Var x = t.constant(Tensor({1, 1, 3, 3}, 1.0));
  const Var w = t.constant(Tensor({1, 1, 3, 3}, 1.0));
  const Var b = t.constant(Tensor({1}, 0.5));
  const Tensor& y = t.value(t.conv2d(x, w, b, 1, 1));
  EXPECT_EQ(y[0], 4.5);
  EXPECT_EQ(y[1], 6.5);
  EXPECT_EQ(y[4], 9.5);
}

TEST(Tape, GroupNorm) {
  SeededRng rng(3);
  const Inputs in{{"x", random_tensor({2, 4, 3, 2}, rng)},
                  {"g", random_tensor({4}, rng)},
                  {"b", random_tensor({4}, rng)}};
  check_gradients([](Tape& t, const auto& v) { return t.group_norm(v.at("x"), v.at("g"), v.at("b"), 2); }, in, rng,
                  1e-5);
}

TEST(Tape, GroupNormNormalizes) {
  SeededRng rng(4);
  Tape t(false);
  const Var y = t.group_norm(t.constant(random_tensor({1, 4, 3, 3}, rng, 5.0)), t.constant(Tensor({4}, 1.0)),
                             t.constant(Tensor({4}, 0.0)), 2);
  const Tensor& out = t.value(y);
  for (std::size_t g = 0; g < 2; ++g) {
    double mean = 0, sq = 0;
    for (std::size_t i = 0; i < 18; ++i) mean += out[g * 18 + i] / 18;
    for (std::size_t i = 0; i < 18; ++i) sq += (out[g * 18 + i] - mean) * (out[g * 18 + i] - mean) / 18;
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(sq, 1.0, 1e-5);
  }
}

TEST(Tape, ModulateAndLinear) {
  SeededRng rng(5);
  const Inputs in{{"x", random_tensor({2, 3, 2, 2}, rng)},
                  {"e", random_tensor({5}, rng)},
                  {"w", random_tensor({6, 5}, rng)},
                  {"b", random_tensor({6}, rng)}};
  check_gradients(
      [](Tape& t, const auto& v) { return t.modulate(v.at("x"), t.linear(v.at("e"), v.at("w"), v.at("b"))); }, in,
      rng);
}

TEST(Tape, TokensRoundTripAndTokenLinear) {
  SeededRng rng(6);
  const Inputs in{{"x", random_tensor({2, 3, 2, 3}, rng)},
                  {"w", random_tensor({4, 3}, rng)},
                  {"b", random_tensor({4}, rng)}};
  check_gradients(
      [](Tape& t, const auto& v) {
        return t.from_tokens(t.token_linear(t.to_tokens(v.at("x")), v.at("w"), v.at("b")), 2, 3);
      },
      in, rng);

  Tape tape(false);
  const Tensor x = random_tensor({2, 3, 2, 3}, rng);
  const Var back = tape.from_tokens(tape.to_tokens(tape.constant(x)), 2, 3);
  EXPECT_EQ(tape.value(back), x);
}

TEST(Tape, AttentionThroughPlans) {
  SeededRng rng(7);
  const std::size_t T = 2, V = 3, S = 2, C = 4;
  for (const auto& plan : {intra_view_plan(T, V, S), cross_view_plan(T, V, S, ViewAdjacency::cyclic(V)),
                           cross_frame_plan(T, V, S)}) {
    const auto shared = std::make_shared<const AttentionPlan>(plan);
    const Inputs in{{"q", random_tensor({T * V * S, C}, rng)},
                    {"k", random_tensor({T * V * S, C}, rng)},
                    {"v", random_tensor({T * V * S, C}, rng)}};
    check_gradients([&](Tape& t, const auto& v) { return t.attention(v.at("q"), v.at("k"), v.at("v"), shared, 2); },
                    in, rng);
  }
}

TEST(Tape, UpsampleNearest) {
  SeededRng rng(8);
  const Inputs in{{"x", random_tensor({1, 2, 2, 3}, rng)}};
  check_gradients([](Tape& t, const auto& v) { return t.upsample_nearest(v.at("x"), 2); }, in, rng);
  Tape tape(false);
  const Var y = tape.upsample_nearest(tape.constant(Tensor({1, 1, 1, 2}, std::vector<double>{1, 2})), 2);
  EXPECT_EQ(tape.value(y).values()[0], 1.0);
  EXPECT_EQ(tape.value(y).values()[3], 2.0);
  EXPECT_EQ(tape.value(y).shape(), (std::vector<std::size_t>{1, 1, 2, 4}));
}

TEST(Tape, MseValueAndSharedInputs) {
  Tape tape;
  const Var a = tape.parameter("a", Tensor({3}, std::vector<double>{1, 2, 3}));
  const Var target = tape.constant(Tensor({3}, std::vector<double>{0, 0, 0}));
  // a + a uses one leaf twice; gradient accumulates.
  const Var loss = tape.mse(tape.add(a, a), target);
  EXPECT_NEAR(tape.value(loss)[0], (4 + 16 + 36) / 3.0, 1e-12);
  tape.backward(loss);
  const Tensor g = tape.parameter_gradients().at("a");
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(g[i], 2 * 2 * (2.0 * (i + 1)) / 3.0, 1e-12);
}

TEST(Tape, Misuse) {
  Tape tape;
  tape.parameter("w", Tensor({2}, 1.0));
  EXPECT_THROW(tape.parameter("w", Tensor({2}, 1.0)), Error);
  const Var a = tape.constant(Tensor({2, 2}, 1.0));
  EXPECT_THROW(tape.backward(a), Error);
  EXPECT_THROW(tape.add(a, tape.constant(Tensor({3}, 1.0))), ShapeError);
  EXPECT_THROW(tape.conv2d(tape.constant(Tensor({1, 2, 3, 3})), tape.constant(Tensor({1, 3, 3, 3})), ad::kNone, 1, 1),
               ShapeError);
}

TEST(Tape, InferenceTapeRecordsNothing) {
  Tape tape(false);
  const Var p = tape.parameter("p", Tensor({1}, 2.0));
  const Var loss = tape.mse(p, tape.constant(Tensor({1}, 0.0)));
  EXPECT_EQ(tape.value(loss)[0], 4.0);
  EXPECT_FALSE(tape.recording());
  EXPECT_EQ(tape.grad(p), nullptr);
}
