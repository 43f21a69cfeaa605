// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "panoforge/error.hpp"
#include "panoforge/pipeline.hpp"

using namespace panoforge;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = PANOFORGE_FIXTURES;

// Tiny network at 64x32 per view: latent 4 x 8 per view.
RunConfig small_config(std::size_t frames = 2, std::uint64_t seed = 1) {
  RunConfig c;
  c.width = 64;
  c.height = 32;
  c.frames = frames;
  c.ddim_steps = 3;
  c.denoiser = DenoiserConfig::tiny();
  c.seed = seed;
  c.sr = SrMode::none;
  c.train_steps = 4;
  return c;
}

double max_abs_diff(const VideoFrames& a, const VideoFrames& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.values().size(); ++i)
    m = std::max(m, static_cast<double>(std::abs(a.values()[i] - b.values()[i])));
  return m;
}

}  // namespace

TEST(RunConfig, DefaultsFollowThePublishedSetup) {
  const RunConfig c = parse_run_config("{}");
  EXPECT_EQ(c.width, 512u);
  EXPECT_EQ(c.height, 256u);
  EXPECT_EQ(c.frames, 8u);
  EXPECT_EQ(c.ddim_steps, 25u);
  EXPECT_DOUBLE_EQ(c.lambda_train, 0.05);
  EXPECT_DOUBLE_EQ(c.lambda_infer, 0.07);
  EXPECT_EQ(c.sr, SrMode::resize);
  EXPECT_EQ(c.sr_factor(), 2u);
  EXPECT_TRUE(c.denoiser == DenoiserConfig::generation());
}

TEST(RunConfig, JsonRoundTripAndPresets) {
  RunConfig c = small_config(3, 99);
  c.lambda_infer = 0.06;
  c.overfit = true;
  const RunConfig back = parse_run_config(run_config_to_json(c));
  EXPECT_EQ(run_config_to_json(back), run_config_to_json(c));
  EXPECT_TRUE(back.denoiser == DenoiserConfig::tiny());
  EXPECT_EQ(back.seed, 99u);

  const RunConfig custom = parse_run_config(R"({"denoiser": {"preset": "tiny", "base_channels": 8}})");
  EXPECT_EQ(custom.denoiser.base_channels, 8u);
  EXPECT_EQ(custom.denoiser.levels, 2u);
  EXPECT_EQ(load_run_config(kFixtures / "tiny_train.json").train_steps, 200u);
}

TEST(RunConfig, RejectsInvalidInput) {
  EXPECT_THROW(parse_run_config(R"({"widht": 64})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"width": 60})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"lambda_infer": -0.1})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"sr": "bicubic"})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"denoiser": "huge"})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"width": "wide"})"), ConfigError);
  EXPECT_THROW(parse_run_config("{"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"ddim_steps": 2000})"), ConfigError);
  EXPECT_THROW(load_run_config("/nonexistent/config.json"), IoError);
}

TEST(SuperResolve, ConstantStaysConstant) {
  const VideoFrames f(2, 1, 4, 6, 0.375f);
  const VideoFrames up = super_resolve(f, SrMode::resize);
  EXPECT_EQ(up.height(), 8u);
  EXPECT_EQ(up.width(), 12u);
  for (float v : up.values()) EXPECT_EQ(v, 0.375f);
}

TEST(SuperResolve, FullResolutionDoubles) {
  const VideoFrames f(1, 1, 256, 512, 0.5f);
  const VideoFrames up = super_resolve(f, SrMode::resize);
  EXPECT_EQ(up.height(), 512u);
  EXPECT_EQ(up.width(), 1024u);
  EXPECT_TRUE(super_resolve(f, SrMode::none) == f);
}

TEST(SuperResolve, SourceSamplesAreReproducedAndMidpointsAveraged) {
  VideoFrames f(1, 1, 3, 4);
  for (std::size_t y = 0; y < 3; ++y)
    for (std::size_t x = 0; x < 4; ++x)
      for (std::size_t c = 0; c < 3; ++c) f.at(0, 0, y, x, c) = static_cast<float>(y * 16 + x * 2 + c) / 64.0f;
  const VideoFrames up = super_resolve(f, SrMode::resize);
  for (std::size_t y = 0; y < 3; ++y)
    for (std::size_t x = 0; x < 4; ++x)
      for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(up.at(0, 0, 2 * y, 2 * x, c), f.at(0, 0, y, x, c));
  EXPECT_FLOAT_EQ(up.at(0, 0, 1, 1, 0), (f.at(0, 0, 0, 0, 0) + f.at(0, 0, 0, 1, 0) + f.at(0, 0, 1, 0, 0) + f.at(0, 0, 1, 1, 0)) / 4);
  // Border replicates the last source sample.
  EXPECT_EQ(up.at(0, 0, 5, 7, 2), f.at(0, 0, 2, 3, 2));
}

TEST(SuperResolve, PluginDispatchAndErrors) {
  const VideoFrames f(1, 1, 2, 2, 0.25f);
  EXPECT_THROW(super_resolve(f, SrMode::plugin), ConfigError);
  const SuperResolver doubler = [](const VideoFrames& in) {
    return VideoFrames(in.views(), in.frames(), 2 * in.height(), 2 * in.width(), 0.75f);
  };
  EXPECT_EQ(super_resolve(f, SrMode::plugin, doubler).values().front(), 0.75f);
  const SuperResolver wrong = [](const VideoFrames& in) { return in; };
  EXPECT_THROW(super_resolve(f, SrMode::plugin, wrong), ShapeError);
  VideoFrames bad = f;
  bad.values()[0] = NAN;
  EXPECT_THROW(super_resolve(bad, SrMode::resize), NumericError);
}

TEST(PrepareScene, TruncatesAndRescales) {
  const SceneSequence s = load_scene(kFixtures / "pair_8.json");
  RunConfig c = small_config(3);
  const SceneSequence p = prepare_scene(s, c, 3);
  EXPECT_EQ(p.frame_count(), 3u);
  EXPECT_DOUBLE_EQ(p.frames[0].cameras[0].intrinsic(0, 0), s.frames[0].cameras[0].intrinsic(0, 0) / 8);
  EXPECT_THROW(prepare_scene(s, c, 9), DatasetError);
}

TEST(SynthesizeFrames, QuantizedAndDeterministic) {
  const SceneSequence s = prepare_scene(load_scene(kFixtures / "pair_8.json"), small_config(2), 2);
  const ControlTensor ctrl = render_sequence(s, RenderOptions{64, 32, 50.0, Palette::standard()});
  const VideoFrames f = synthesize_frames(ctrl);
  EXPECT_EQ(f.dims(), (std::array<std::uint64_t, 5>{2, 2, 32, 64, 3}));
  for (float v : f.values()) {
    ASSERT_GE(v, 0.0f);
    ASSERT_LE(v, 1.0f);
    ASSERT_EQ(std::round(v * 255.0f), v * 255.0f);
  }
  EXPECT_TRUE(f == synthesize_frames(ctrl));
  // The stand-in photographs survive the exact codec.
  EXPECT_TRUE(decode_exact(encode_exact(f)) == f);
}

TEST(TrainStage1, OverfitHalvesLossWithFullHistory) {
  const std::vector<SceneSequence> scenes = load_scene_directory(kFixtures / "train");
  const RunConfig c = load_run_config(kFixtures / "tiny_train.json");
  std::ostringstream log;
  const TrainResult r = train_stage1(scenes, c, &log);
  ASSERT_EQ(r.loss_history.size(), c.train_steps);
  EXPECT_LE(r.loss_history.back(), 0.5 * r.loss_history.front());
  EXPECT_NE(log.str().find("stage1"), std::string::npos);
}

TEST(TrainStage1, SameSeedSameHistory) {
  const std::vector<SceneSequence> scenes = load_scene_directory(kFixtures / "train");
  RunConfig c = small_config(2, 17);
  const TrainResult a = train_stage1(scenes, c);
  const TrainResult b = train_stage1(scenes, c);
  EXPECT_EQ(a.loss_history, b.loss_history);
  EXPECT_TRUE(a.weights == b.weights);
  c.seed = 18;
  EXPECT_NE(train_stage1(scenes, c).loss_history, a.loss_history);
  EXPECT_THROW(train_stage1({}, c), DatasetError);
}

TEST(TrainStage2, OverfitHalvesLoss) {
  const std::vector<SceneSequence> scenes = load_scene_directory(kFixtures / "train");
  const RunConfig c = load_run_config(kFixtures / "tiny_train.json");
  std::ostringstream log;
  const TrainResult r = train_stage2(scenes, c, &log);
  ASSERT_EQ(r.loss_history.size(), c.train_steps);
  EXPECT_LE(r.loss_history.back(), 0.5 * r.loss_history.front());
  EXPECT_NE(log.str().find("lambda_train=0.05"), std::string::npos);
}

TEST(TrainStage2, RequiresTwoFrames) {
  const std::vector<SceneSequence> single = load_scene_directory(kFixtures / "train_single_frame");
  EXPECT_THROW(train_stage2(single, small_config(2)), DatasetError);
  EXPECT_THROW(train_stage2({}, small_config(2)), DatasetError);
  const std::vector<SceneSequence> scenes = load_scene_directory(kFixtures / "train");
  EXPECT_THROW(train_stage2(scenes, small_config(1)), DatasetError);
}

TEST(TrainStage2, LambdaZeroTargetIsPureNoise) {
  TrainingBatch b;
  b.latent = draw_noise(LatentShape{4, 10, 25, 2, 4}, SeededRng(1));
  b.first_frame = b.latent.frame(0);
  const NoiseSchedule s = NoiseSchedule::cosine();
  const TrainingDraw d = draw_training(b.latent.shape(), s, SeededRng(2));
  const TrainingSample ts = make_training_sample(b, d, s, 0.0);
  EXPECT_TRUE(ts.target == d.noise);
  double mean = 0, sq = 0;
  for (double v : ts.target.values()) mean += v;
  mean /= static_cast<double>(ts.target.size());
  for (double v : ts.target.values()) sq += (v - mean) * (v - mean);
  EXPECT_NEAR(mean, 0.0, 4.0 / std::sqrt(static_cast<double>(ts.target.size())));
  EXPECT_NEAR(sq / static_cast<double>(ts.target.size() - 1), 1.0, 0.05);
}

TEST(TrainStage2, ConditionPaddingIsZeroInNetworkInput) {
  const LatentShape sh{4, 2, 3, 2, 4};
  const LatentVideo x = draw_noise(sh, SeededRng(3));
  const LatentVideo z1 = draw_noise(LatentShape{1, 2, 3, 2, 4}, SeededRng(4));
  const Tensor in = build_network_input(x, build_condition(sh, z1), 4);
  ASSERT_EQ(in.shape(), (std::vector<std::size_t>{8, 8, 2, 3}));
  for (std::size_t n = 0; n < 8; ++n) {
    const std::size_t t = n / 2, v = n % 2;
    for (std::size_t c = 4; c < 8; ++c)
      for (std::size_t y = 0; y < 2; ++y)
        for (std::size_t xx = 0; xx < 3; ++xx) {
          const double got = in[((n * 8 + c) * 2 + y) * 3 + xx];
          if (t == 0) EXPECT_EQ(got, z1.at_view(0, v, y, xx, c - 4));
          else EXPECT_EQ(got, 0.0);
        }
  }
}

TEST(Generate, ConditionMattersPaddingDoesNot) {
  const DenoiserWeights w = DenoiserWeights::initialize(DenoiserConfig::tiny(), 2);
  const LatentShape sh{3, 4, 8, 2, 4};
  DenoiserInput in;
  in.x_t = draw_noise(sh, SeededRng(5));
  in.step = 600;
  const LatentVideo z1 = draw_noise(LatentShape{1, 4, 8, 2, 4}, SeededRng(6));
  in.condition = build_condition(sh, z1);
  const LatentVideo with = predict_noise(w, in);
  DenoiserInput zeroed = in;
  zeroed.condition = build_condition(sh, LatentVideo(z1.shape()));
  EXPECT_FALSE(predict_noise(w, zeroed) == with);
  DenoiserInput repadded = in;
  for (std::size_t t = 1; t < 3; ++t) repadded.condition->set_frame(t, LatentVideo(z1.shape()));
  EXPECT_TRUE(predict_noise(w, repadded) == with);
}

TEST(Generate, DeterministicWithFirstFrameFromStageOne) {
  const SceneSequence s = load_scene(kFixtures / "pair_8.json");
  const RunConfig c = small_config(3, 4);
  const DenoiserWeights w1 = DenoiserWeights::initialize(c.denoiser, 10);
  const DenoiserWeights w2 = DenoiserWeights::initialize(c.denoiser, 11);
  const GenerateResult a = generate(s, w1, w2, c);
  const GenerateResult b = generate(s, w1, w2, c);
  EXPECT_TRUE(a.frames == b.frames);
  EXPECT_TRUE(a.video_latent == b.video_latent);
  EXPECT_TRUE(a.video_latent.frame(0) == a.first_frame_latent);
  for (float v : a.frames.values()) {
    ASSERT_GE(v, 0.0f);
    ASSERT_LE(v, 1.0f);
  }
  RunConfig other = c;
  other.seed = 5;
  EXPECT_GT(max_abs_diff(generate(s, w1, w2, other).frames, a.frames), 0.0);
  // The prior strength reaches the stage-2 frames only.
  RunConfig no_prior = c;
  no_prior.lambda_infer = 0.0;
  const GenerateResult plain = generate(s, w1, w2, no_prior);
  EXPECT_TRUE(plain.first_frame_latent == a.first_frame_latent);
  EXPECT_FALSE(plain.video_latent == a.video_latent);
}

TEST(Generate, ShapeFollowsConfig) {
  const SceneSequence pair = load_scene(kFixtures / "pair_8.json");
  const SceneSequence six = load_scene(kFixtures / "drive_6x8.json");
  struct Case {
    const SceneSequence* scene;
    std::size_t width, height, frames;
    SrMode sr;
  };
  const std::vector<Case> cases{{&pair, 32, 16, 1, SrMode::none},  {&pair, 64, 32, 2, SrMode::resize},
                                {&six, 32, 16, 3, SrMode::resize}, {&pair, 48, 32, 4, SrMode::none},
                                {&six, 64, 16, 2, SrMode::none}};
  for (const Case& k : cases) {
    RunConfig c = small_config(k.frames, 3);
    c.width = k.width;
    c.height = k.height;
    c.sr = k.sr;
    c.ddim_steps = 2;
    const DenoiserWeights w = DenoiserWeights::initialize(c.denoiser, 1);
    const GenerateResult r = generate(*k.scene, w, w, c);
    const std::size_t f = c.sr_factor();
    EXPECT_EQ(r.frames.dims(), (std::array<std::uint64_t, 5>{k.scene->views, k.frames, k.height * f, k.width * f, 3}))
        << k.width << "x" << k.height << " T=" << k.frames;
    EXPECT_EQ(r.video_latent.frames(), k.frames);
  }
}

TEST(Generate, Errors) {
  const SceneSequence s = load_scene(kFixtures / "pair_8.json");
  RunConfig c = small_config(2);
  const DenoiserWeights w = DenoiserWeights::initialize(c.denoiser, 1);
  const DenoiserWeights other = DenoiserWeights::initialize(DenoiserConfig::generation(), 1);
  EXPECT_THROW(generate(s, w, other, c), ConfigError);
  c.sr = SrMode::plugin;
  EXPECT_THROW(generate(s, w, w, c), ConfigError);
  c = small_config(9);
  EXPECT_THROW(generate(s, w, w, c), DatasetError);
}

TEST(LossHistory, CsvFormat) {
  const fs::path p = fs::temp_directory_path() / "panoforge_loss.csv";
  write_loss_history(p, {1.5, 0.25});
  std::ifstream in(p);
  std::string header, row0, row1;
  std::getline(in, header);
  std::getline(in, row0);
  std::getline(in, row1);
  EXPECT_EQ(header, "step,loss");
  EXPECT_EQ(row0, "0,1.5");
  EXPECT_EQ(row1, "1,0.25");
  fs::remove(p);
}
