// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "panoforge/diffusion.hpp"
#include "panoforge/error.hpp"

using namespace panoforge;

namespace {

LatentShape shape(std::size_t frames, std::size_t h, std::size_t w, std::size_t views, std::size_t c = 4) {
  return LatentShape{frames, h, w, views, c};
}

double max_abs_diff(const LatentVideo& a, const LatentVideo& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

}  // namespace

TEST(Schedule, CosineInvariants) {
  const NoiseSchedule s = NoiseSchedule::cosine();
  ASSERT_EQ(s.steps(), 1000u);
  EXPECT_NEAR(s.alpha(0), 1.0, 1e-12);
  EXPECT_NEAR(s.sigma(0), 0.0, 1e-12);
  for (std::size_t t = 0; t < s.steps(); ++t) {
    EXPECT_NEAR(s.alpha(t) * s.alpha(t) + s.sigma(t) * s.sigma(t), 1.0, 1e-9);
    EXPECT_GT(s.alpha(t), 0.0);
    EXPECT_LE(s.alpha(t), 1.0);
    EXPECT_GE(s.sigma(t), 0.0);
    EXPECT_LT(s.sigma(t), 1.0);
    if (t > 0) {
      EXPECT_LT(s.alpha(t), s.alpha(t - 1));
      EXPECT_GT(s.sigma(t), s.sigma(t - 1));
    }
  }
  EXPECT_LT(s.alpha(999), 1e-5);
}

TEST(Schedule, ConstructorRejectsBrokenTables) {
  EXPECT_THROW(NoiseSchedule({1.0, 0.6}, {0.0, 0.9}), Error);       // not variance preserving
  EXPECT_THROW(NoiseSchedule({0.6, 0.8}, {0.8, 0.6}), Error);       // alpha rising
  EXPECT_THROW(NoiseSchedule({1.0}, {0.0, 0.1}), Error);            // length mismatch
  EXPECT_THROW(NoiseSchedule({}, {}), Error);
  EXPECT_NO_THROW(NoiseSchedule({1.0, 0.6}, {0.0, 0.8}));
}

TEST(ForwardDiffuse, Endpoints) {
  const NoiseSchedule s = NoiseSchedule::cosine();
  const LatentShape sh = shape(2, 3, 4, 2);
  const LatentVideo x = draw_noise(sh, SeededRng(1));
  const LatentVideo eps = draw_noise(sh, SeededRng(2));
  EXPECT_TRUE(forward_diffuse(x, 0, s, eps) == x);

  const LatentVideo zero(sh);
  const LatentVideo out = forward_diffuse(zero, 500, s, eps);
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out.values()[i], s.sigma(500) * eps.values()[i]);
}

TEST(ForwardDiffuse, ShapeMismatchAndRange) {
  const NoiseSchedule s = NoiseSchedule::cosine();
  const LatentVideo a(shape(1, 2, 2, 1)), b(shape(1, 2, 2, 2));
  EXPECT_THROW(forward_diffuse(a, 3, s, b), ShapeError);
  EXPECT_THROW(forward_diffuse(a, 1000, s, a), IndexError);
}

TEST(ForwardDiffuse, UnitVarianceMonteCarlo) {
  const NoiseSchedule s = NoiseSchedule::cosine();
  const LatentShape sh = shape(1, 50, 500, 1, 4);  // 1e5 samples
  const LatentVideo x = draw_noise(sh, SeededRng(10));
  const LatentVideo eps = draw_noise(sh, SeededRng(11));
  for (std::size_t t : {0u, 137u, 500u, 999u}) {
    const LatentVideo out = forward_diffuse(x, t, s, eps);
    double mean = 0, sq = 0;
    for (double v : out.values()) mean += v;
    mean /= static_cast<double>(out.size());
    for (double v : out.values()) sq += (v - mean) * (v - mean);
    const double var = sq / static_cast<double>(out.size() - 1);
    EXPECT_NEAR(var, 1.0, 0.02) << "t=" << t;
  }
}

TEST(NoisePrior, LambdaZeroIsIdentity) {
  const LatentShape one = shape(1, 3, 4, 2);
  const LatentVideo z1 = draw_noise(one, SeededRng(3));
  std::vector<LatentVideo> eps{draw_noise(one, SeededRng(4)), draw_noise(one, SeededRng(5))};
  const auto out = apply_noise_prior(z1, eps, 0.0);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_TRUE(out[0] == eps[0]);
  EXPECT_TRUE(out[1] == eps[1]);

  const LatentVideo video = draw_noise(shape(3, 3, 4, 2), SeededRng(6));
  EXPECT_TRUE(apply_noise_prior(z1, video, 0.0, 1) == video);
}

TEST(NoisePrior, InferenceLambdaOnConstants) {
  const LatentShape one = shape(1, 2, 2, 2);
  const LatentVideo z1(one, 1.0);
  std::vector<LatentVideo> eps(7, LatentVideo(one, 0.0));
  for (const LatentVideo& f : apply_noise_prior(z1, eps, 0.07)) {
    for (double v : f.values()) EXPECT_NEAR(v, 0.07, 1e-15);
  }
}

TEST(NoisePrior, VideoFormSkipsConditionFrame) {
  const LatentShape one = shape(1, 2, 3, 2);
  const LatentVideo z1(one, 2.0);
  const LatentVideo noise(shape(4, 2, 3, 2), 0.5);
  const LatentVideo out = apply_noise_prior(z1, noise, 0.05, 1);
  EXPECT_TRUE(out.frame(0) == noise.frame(0));
  for (std::size_t t = 1; t < 4; ++t) {
    const LatentVideo f = out.frame(t);
    for (double v : f.values()) EXPECT_NEAR(v, 0.6, 1e-15);
  }
}

TEST(NoisePrior, ShapeMismatch) {
  const LatentVideo z1(shape(1, 2, 2, 1));
  std::vector<LatentVideo> eps{LatentVideo(shape(1, 2, 2, 2))};
  EXPECT_THROW(apply_noise_prior(z1, eps, 0.07), ShapeError);
  EXPECT_THROW(apply_noise_prior(z1, LatentVideo(shape(3, 2, 2, 2)), 0.07, 1), ShapeError);
}

TEST(NoisePrior, MonteCarloMean) {
  const LatentShape one = shape(1, 2, 3, 2, 2);
  const LatentVideo z1 = draw_noise(one, SeededRng(8));
  const double lambda = 0.07;
  const std::size_t n = 10000;
  std::vector<double> mean(one.size(), 0.0);
  const SeededRng root(99);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<LatentVideo> eps{draw_noise(one, root.split(i))};
    const auto out = apply_noise_prior(z1, eps, lambda);
    for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += out[0].values()[j];
  }
  for (std::size_t j = 0; j < mean.size(); ++j) {
    EXPECT_NEAR(mean[j] / n, lambda * z1.values()[j], 3.0 / std::sqrt(static_cast<double>(n)));
  }
}

TEST(DdimStep, ExactNoiseRecoversSignal) {
  const NoiseSchedule s = NoiseSchedule::cosine();
  const LatentShape sh = shape(2, 3, 3, 2);
  SeededRng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const LatentVideo x = draw_noise(sh, rng.split(2 * trial));
    const LatentVideo eps = draw_noise(sh, rng.split(2 * trial + 1));
    const std::size_t t = 1 + rng.below(999);
    const LatentVideo xt = forward_diffuse(x, t, s, eps);
    EXPECT_LT(max_abs_diff(ddim_step(xt, eps, t, 0, s), x), 1e-6) << "t=" << t;
  }
}

TEST(DdimStep, NoOpAndZeroNoise) {
  const NoiseSchedule s = NoiseSchedule::cosine();
  const LatentShape sh = shape(1, 2, 2, 1);
  const LatentVideo xt = draw_noise(sh, SeededRng(3));
  const LatentVideo eps = draw_noise(sh, SeededRng(4));
  EXPECT_LT(max_abs_diff(ddim_step(xt, eps, 400, 400, s), xt), 1e-12);

  const LatentVideo out = ddim_step(xt, LatentVideo(sh), 400, 120, s);
  const double ratio = s.alpha(120) / s.alpha(400);
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out.values()[i], ratio * xt.values()[i], 1e-12);
}

TEST(DdimStep, Errors) {
  const LatentShape sh = shape(1, 2, 2, 1);
  const LatentVideo x(sh);
  const NoiseSchedule s = NoiseSchedule::cosine();
  EXPECT_THROW(ddim_step(x, x, 10, 20, s), IndexError);
  EXPECT_THROW(ddim_step(x, LatentVideo(shape(1, 2, 2, 2)), 10, 5, s), ShapeError);
  const NoiseSchedule vanishing({1.0, 1e-13}, {0.0, 1.0 - 4e-10});
  EXPECT_THROW(ddim_step(x, x, 1, 0, vanishing), NumericError);
}

TEST(Timesteps, UniformDescending) {
  const auto steps = ddim_timesteps(1000, 25);
  ASSERT_EQ(steps.size(), 25u);
  EXPECT_EQ(steps.front(), 999u);
  EXPECT_EQ(steps.back(), 0u);
  for (std::size_t i = 1; i < steps.size(); ++i) EXPECT_LT(steps[i], steps[i - 1]);
  EXPECT_EQ(ddim_timesteps(1000, 1), std::vector<std::size_t>{999});
  EXPECT_THROW(ddim_timesteps(10, 11), ConfigError);
  EXPECT_THROW(ddim_timesteps(10, 0), ConfigError);
}

TEST(DrawNoise, BlocksAreOrderIndependentSubstreams) {
  const LatentShape sh = shape(3, 2, 2, 2, 3);
  const LatentVideo a = draw_noise(sh, SeededRng(5));
  EXPECT_TRUE(a == draw_noise(sh, SeededRng(5)));
  EXPECT_FALSE(a == draw_noise(sh, SeededRng(6)));
  // The first frames of a longer draw match a shorter draw.
  const LatentVideo longer = draw_noise(shape(5, 2, 2, 2, 3), SeededRng(5));
  for (std::size_t t = 0; t < 3; ++t) EXPECT_TRUE(longer.frame(t) == a.frame(t));
}

TEST(Sample, DeterministicForSeed) {
  const NoiseSchedule s = NoiseSchedule::cosine();
  const LatentShape sh = shape(2, 3, 4, 2);
  const NoisePredictor pred = [](const LatentVideo& x, std::size_t step) {
    LatentVideo out = x;
    for (double& v : out.values()) v = std::tanh(v) * 0.5 + 1e-4 * static_cast<double>(step);
    return out;
  };
  const SamplerOptions opts;
  const LatentVideo a = sample(pred, s, sh, SeededRng(17), opts);
  const LatentVideo b = sample(pred, s, sh, SeededRng(17), opts);
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(a == sample(pred, s, sh, SeededRng(18), opts));
}

TEST(Sample, PerfectOracleReturnsZeroLatent) {
  const NoiseSchedule s = NoiseSchedule::cosine();
  const LatentShape sh = shape(2, 4, 4, 2);
  const SeededRng rng(23);
  const LatentVideo init = initial_latent(sh, rng, std::nullopt);
  const NoisePredictor oracle = [&](const LatentVideo&, std::size_t) { return init; };
  const LatentVideo out = sample(oracle, s, sh, rng, SamplerOptions{});
  for (double v : out.values()) EXPECT_NEAR(v, 0.0, 1e-4);
}

TEST(Sample, TwentyFiveStepsKeepsEightFrameShape) {
  const NoiseSchedule s = NoiseSchedule::cosine();
  const LatentShape sh = shape(8, 4, 8, 6);
  std::vector<std::size_t> seen;
  const NoisePredictor pred = [&](const LatentVideo& x, std::size_t step) {
    seen.push_back(step);
    return LatentVideo(x.shape(), 0.1);
  };
  const LatentVideo out = sample(pred, s, sh, SeededRng(1), SamplerOptions{});
  EXPECT_TRUE(out.shape() == sh);
  // 25 schedule points; the final point t=0 is noise free and needs no evaluation.
  auto expected = ddim_timesteps(1000, 25);
  expected.pop_back();
  EXPECT_EQ(seen, expected);
  EXPECT_TRUE(out.all_finite());
}

TEST(Sample, PriorShiftsInitialLatentAndRejectsBadPredictor) {
  const LatentShape sh = shape(3, 2, 2, 2);
  const SeededRng rng(4);
  const LatentVideo z1(shape(1, 2, 2, 2), 1.0);
  const NoisePrior prior{z1, 0.07, 1};
  const LatentVideo plain = initial_latent(sh, rng, std::nullopt);
  const LatentVideo mixed = initial_latent(sh, rng, prior);
  EXPECT_TRUE(mixed.frame(0) == plain.frame(0));
  for (std::size_t t = 1; t < 3; ++t) {
    const LatentVideo m = mixed.frame(t), p = plain.frame(t);
    for (std::size_t i = 0; i < z1.size(); ++i) EXPECT_NEAR(m.values()[i], p.values()[i] + 0.07, 1e-15);
  }

  const NoisePredictor bad = [](const LatentVideo&, std::size_t) { return LatentVideo(shape(1, 1, 1, 1)); };
  EXPECT_THROW(sample(bad, NoiseSchedule::cosine(), sh, rng, SamplerOptions{}), ShapeError);
}

TEST(Sample, ClipBoundsEstimates) {
  const NoiseSchedule s = NoiseSchedule::cosine();
  const LatentShape sh = shape(1, 3, 3, 1);
  const NoisePredictor wild = [](const LatentVideo& x, std::size_t) { return LatentVideo(x.shape(), -5.0); };
  SamplerOptions opts;
  opts.clip_denoised = 1.0;
  const LatentVideo out = sample(wild, s, sh, SeededRng(2), opts);
  for (double v : out.values()) {
    EXPECT_LE(v, 1.0 + 1e-12);
    EXPECT_GE(v, -1.0 - 1e-12);
  }
}
