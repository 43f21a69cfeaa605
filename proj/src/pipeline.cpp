// SPDX-License-Identifier: Apache-2.0
#include "panoforge/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

#include "json_config.hpp"
#include "panoforge/geometry.hpp"
#include "panoforge/rng.hpp"

namespace panoforge {
namespace {

using detail::json;
using detail::read_field;

constexpr std::size_t kFactor = LatentCodec::kFactor;

float quantize_unit(double v) {
  const double clamped = std::clamp(v, 0.0, 1.0);
  return static_cast<float>(std::floor(clamped * 255.0 + 0.5) / 255.0);
}

DenoiserConfig denoiser_from_json(const json& j) {
  if (j.is_string()) {
    const std::string name = j.get<std::string>();
    if (name == "tiny") return DenoiserConfig::tiny();
    if (name == "generation") return DenoiserConfig::generation();
    throw ConfigError("denoiser preset '" + name + "' is unknown");
  }
  DenoiserConfig base = DenoiserConfig::generation();
  if (j.is_object() && j.contains("preset")) {
    json copy = j;
    base = denoiser_from_json(copy["preset"]);
    copy.erase("preset");
    return detail::denoiser_config_from_json(copy, base, "denoiser");
  }
  return detail::denoiser_config_from_json(j, base, "denoiser");
}

std::vector<double> text_for(const SceneSequence& scene, const RunConfig& config) {
  return text_attribute_embedding(scene.attributes, config.denoiser.text_dim);
}

struct EncodedClip {
  LatentVideo latent;
  Tensor control;
};

EncodedClip encode_clip(const SceneSequence& scene, const RunConfig& config, std::size_t frames) {
  const SceneSequence prepared = prepare_scene(scene, config, frames);
  const ControlTensor control = render_sequence(prepared, RenderOptions{config.width, config.height, config.d_max,
                                                                        Palette::standard()});
  return {encode_frames(synthesize_frames(control)), pool_control(control, 0, frames, kFactor)};
}

TrainResult run_training(std::vector<TrainingBatch> batches, const RunConfig& config, double lambda,
                         const char* stage, std::ostream* log) {
  if (batches.empty()) throw DatasetError("no training samples");
  const NoiseSchedule schedule = config.schedule();
  TrainResult result{DenoiserWeights::initialize(config.denoiser, config.seed), {}};
  const SeededRng root = SeededRng(config.seed).split(stage);
  std::optional<TrainingDraw> fixed;
  if (config.overfit) fixed = draw_training(batches.front().latent.shape(), schedule, root.split("overfit"));
  if (log) {
    *log << stage << ": samples=" << batches.size() << " steps=" << config.train_steps
         << " lr=" << config.learning_rate << " lambda_train=" << lambda << " seed=" << config.seed
         << (config.overfit ? " overfit" : "") << '\n';
  }
  for (std::size_t step = 0; step < config.train_steps; ++step) {
    const TrainingBatch& batch = config.overfit ? batches.front() : batches[step % batches.size()];
    const TrainingDraw draw = fixed ? *fixed : draw_training(batch.latent.shape(), schedule, root.split(step));
    LossGradient lg = loss_gradient(result.weights, batch, draw, schedule, lambda);
    if (!std::isfinite(lg.loss)) throw NumericError(std::string(stage) + ": loss diverged at step " + std::to_string(step));
    result.loss_history.push_back(lg.loss);
    sgd_step_in_place(result.weights, lg.gradients, config.learning_rate);
  }
  if (log && !result.loss_history.empty()) {
    *log << stage << ": loss " << result.loss_history.front() << " -> " << result.loss_history.back() << '\n';
  }
  return result;
}

}  // namespace

SrMode parse_sr_mode(std::string_view text) {
  if (text == "none") return SrMode::none;
  if (text == "resize") return SrMode::resize;
  if (text == "plugin") return SrMode::plugin;
  throw ConfigError("unknown super-resolution mode '" + std::string(text) + "'");
}

std::string_view to_string(SrMode mode) {
  switch (mode) {
    case SrMode::none: return "none";
    case SrMode::resize: return "resize";
    case SrMode::plugin: return "plugin";
  }
  return "none";
}

void RunConfig::validate() const {
  if (width == 0 || height == 0 || width % kFactor != 0 || height % kFactor != 0) {
    throw ConfigError("resolution " + std::to_string(width) + "x" + std::to_string(height) +
                      " must be positive and divide by 8");
  }
  denoiser.validate();
  const std::size_t m = denoiser.spatial_multiple();
  if ((width / kFactor) % m != 0 || (height / kFactor) % m != 0) {
    throw ConfigError("latent size must divide by " + std::to_string(m) + " for this network depth");
  }
  if (denoiser.latent_channels != LatentCodec::kLatentChannels) throw ConfigError("latent_channels must be 4");
  if (denoiser.condition_channels != denoiser.latent_channels) throw ConfigError("condition_channels must equal latent_channels");
  if (denoiser.control_channels != kControlChannels) throw ConfigError("control_channels must be 19");
  if (frames == 0) throw ConfigError("frames must be positive");
  if (schedule_steps < 2) throw ConfigError("schedule_steps must be at least 2");
  if (ddim_steps == 0 || ddim_steps > schedule_steps) throw ConfigError("ddim_steps must be in [1, schedule_steps]");
  if (!(lambda_train >= 0.0) || !(lambda_infer >= 0.0)) throw ConfigError("lambda values must be non-negative");
  if (!(d_max > 0.0)) throw ConfigError("d_max must be positive");
  if (calib_width == 0 || calib_height == 0) throw ConfigError("calibration resolution must be positive");
  if (!(clip_denoised >= 0.0)) throw ConfigError("clip_denoised must be non-negative");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be finite and non-negative");
  if (!(schedule_terminal_gap > 0.0 && schedule_terminal_gap < 1.0)) throw ConfigError("schedule_terminal_gap must be in (0, 1)");
}

NoiseSchedule RunConfig::schedule() const { return NoiseSchedule::cosine(schedule_steps, schedule_terminal_gap); }

RunConfig parse_run_config(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::set<std::string> known = {
      "width", "height", "frames", "ddim_steps", "lambda_train", "lambda_infer", "seed", "schedule_steps",
      "schedule_terminal_gap", "sr", "d_max", "calib_width", "calib_height", "clip_denoised", "denoiser",
      "train_steps", "learning_rate", "overfit"};
  for (const auto& item : j.items()) {
    if (!known.count(item.key())) throw ConfigError("config: unknown key '" + item.key() + "'");
  }
  RunConfig c;
  const std::string where = "config";
  c.width = read_field(j, "width", c.width, where);
  c.height = read_field(j, "height", c.height, where);
  c.frames = read_field(j, "frames", c.frames, where);
  c.ddim_steps = read_field(j, "ddim_steps", c.ddim_steps, where);
  c.lambda_train = read_field(j, "lambda_train", c.lambda_train, where);
  c.lambda_infer = read_field(j, "lambda_infer", c.lambda_infer, where);
  c.seed = read_field(j, "seed", c.seed, where);
  c.schedule_steps = read_field(j, "schedule_steps", c.schedule_steps, where);
  c.schedule_terminal_gap = read_field(j, "schedule_terminal_gap", c.schedule_terminal_gap, where);
  c.sr = parse_sr_mode(read_field(j, "sr", std::string(to_string(c.sr)), where));
  c.d_max = read_field(j, "d_max", c.d_max, where);
  c.calib_width = read_field(j, "calib_width", c.calib_width, where);
  c.calib_height = read_field(j, "calib_height", c.calib_height, where);
  c.clip_denoised = read_field(j, "clip_denoised", c.clip_denoised, where);
  if (j.contains("denoiser")) c.denoiser = denoiser_from_json(j["denoiser"]);
  c.train_steps = read_field(j, "train_steps", c.train_steps, where);
  c.learning_rate = read_field(j, "learning_rate", c.learning_rate, where);
  c.overfit = read_field(j, "overfit", c.overfit, where);
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str());
}

std::string run_config_to_json(const RunConfig& c) {
  json j{{"width", c.width},
         {"height", c.height},
         {"frames", c.frames},
         {"ddim_steps", c.ddim_steps},
         {"lambda_train", c.lambda_train},
         {"lambda_infer", c.lambda_infer},
         {"seed", c.seed},
         {"schedule_steps", c.schedule_steps},
         {"schedule_terminal_gap", c.schedule_terminal_gap},
         {"sr", std::string(to_string(c.sr))},
         {"d_max", c.d_max},
         {"calib_width", c.calib_width},
         {"calib_height", c.calib_height},
         {"clip_denoised", c.clip_denoised},
         {"denoiser", detail::denoiser_config_to_json(c.denoiser)},
         {"train_steps", c.train_steps},
         {"learning_rate", c.learning_rate},
         {"overfit", c.overfit}};
  return j.dump(2);
}

SceneSequence prepare_scene(const SceneSequence& scene, const RunConfig& config, std::size_t frames) {
  if (frames == 0 || frames > scene.frame_count()) {
    throw DatasetError("scene has " + std::to_string(scene.frame_count()) + " frames, " + std::to_string(frames) +
                       " requested");
  }
  SceneSequence out = scene;
  out.frames.resize(frames);
  const double sx = static_cast<double>(config.width) / static_cast<double>(config.calib_width);
  const double sy = static_cast<double>(config.height) / static_cast<double>(config.calib_height);
  if (sx == 1.0 && sy == 1.0) return out;
  return rescale_intrinsics(std::move(out), sx, sy);
}

VideoFrames synthesize_frames(const ControlTensor& control) {
  VideoFrames out(control.views(), control.frames(), control.height(), control.width());
  for (std::size_t v = 0; v < control.views(); ++v) {
    for (std::size_t t = 0; t < control.frames(); ++t) {
      const float* slice = control.slice(v, t);
      for (std::size_t y = 0; y < control.height(); ++y) {
        for (std::size_t x = 0; x < control.width(); ++x) {
          const float* ch = slice + (y * control.width() + x) * kControlChannels;
          double rgb[3];
          for (std::size_t c = 0; c < 3; ++c) rgb[c] = 0.15 + 0.35 * ch[kPoseChannel + c] / 255.0;
          bool road = false, edge = false;
          for (std::size_t c = 0; c < 3; ++c) {
            road = road || ch[kRoadChannel + c] > 0.0f;
            edge = edge || ch[kBoxChannel + c] > 0.0f;
          }
          if (road) for (std::size_t c = 0; c < 3; ++c) rgb[c] = 0.25 + 0.6 * ch[kRoadChannel + c];
          for (std::size_t b = 0; b < kDepthBins; ++b) {
            if (ch[kDepthChannel + b] <= 0.0f) continue;
            const double shade = 1.0 - 0.07 * static_cast<double>(b);
            rgb[0] = 0.55 * shade;
            rgb[1] = 0.50 * shade;
            rgb[2] = 0.45 * shade;
            break;
          }
          if (edge) for (std::size_t c = 0; c < 3; ++c) rgb[c] = 0.05 + 0.9 * ch[kBoxChannel + c];
          for (std::size_t c = 0; c < 3; ++c) out.at(v, t, y, x, c) = quantize_unit(rgb[c]);
        }
      }
    }
  }
  return out;
}

std::vector<SceneSequence> load_scene_directory(const std::filesystem::path& directory) {
  std::error_code ec;
  if (!std::filesystem::is_directory(directory, ec)) throw IoError("not a directory: " + directory.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(directory)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DatasetError("no scene files in " + directory.string());
  std::vector<SceneSequence> scenes;
  for (const auto& file : files) scenes.push_back(load_scene(file));
  return scenes;
}

TrainResult train_stage1(const std::vector<SceneSequence>& scenes, const RunConfig& config, std::ostream* log) {
  config.validate();
  std::vector<TrainingBatch> batches;
  for (const SceneSequence& scene : scenes) {
    const std::size_t frames = std::min(config.frames, scene.frame_count());
    const EncodedClip clip = encode_clip(scene, config, frames);
    const std::vector<double> text = text_for(scene, config);
    const std::size_t per_frame = clip.control.size() / frames;
    for (std::size_t t = 0; t < frames; ++t) {
      TrainingBatch batch;
      batch.latent = clip.latent.frame(t);
      const auto begin = clip.control.values().begin() + static_cast<std::ptrdiff_t>(t * per_frame);
      Tensor control({scene.views, kControlChannels, clip.control.dim(2), clip.control.dim(3)},
                     std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(per_frame)));
      batch.control = std::move(control);
      batch.text = text;
      batch.mode = DenoiserMode::image;
      batches.push_back(std::move(batch));
      if (config.overfit) break;
    }
    if (config.overfit) break;
  }
  return run_training(std::move(batches), config, 0.0, "stage1", log);
}

TrainResult train_stage2(const std::vector<SceneSequence>& scenes, const RunConfig& config, std::ostream* log) {
  config.validate();
  if (scenes.empty()) throw DatasetError("no training scenes");
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    if (scenes[i].frame_count() < 2) {
      throw DatasetError("stage 2 needs scenes with at least 2 frames; scene " + std::to_string(i) + " has " +
                         std::to_string(scenes[i].frame_count()));
    }
  }
  if (config.frames < 2) throw DatasetError("stage 2 needs frames >= 2");
  std::vector<TrainingBatch> batches;
  for (const SceneSequence& scene : scenes) {
    const std::size_t frames = std::min(config.frames, scene.frame_count());
    EncodedClip clip = encode_clip(scene, config, frames);
    TrainingBatch batch;
    batch.first_frame = clip.latent.frame(0);
    batch.latent = std::move(clip.latent);
    batch.control = std::move(clip.control);
    batch.text = text_for(scene, config);
    batch.mode = DenoiserMode::video;
    batches.push_back(std::move(batch));
    if (config.overfit) break;
  }
  return run_training(std::move(batches), config, config.lambda_train, "stage2", log);
}

void write_loss_history(const std::filesystem::path& path, const std::vector<double>& history) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "step,loss\n" << std::setprecision(17);
  for (std::size_t i = 0; i < history.size(); ++i) out << i << ',' << history[i] << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

VideoFrames super_resolve(const VideoFrames& frames, SrMode mode, const SuperResolver& plugin) {
  for (float v : frames.values()) {
    if (!std::isfinite(v)) throw NumericError("super-resolution input is not finite");
  }
  if (mode == SrMode::none) return frames;
  if (mode == SrMode::plugin) {
    if (!plugin) throw ConfigError("super-resolution plugin selected but none is installed");
    VideoFrames out = plugin(frames);
    if (out.views() != frames.views() || out.frames() != frames.frames() || out.height() != 2 * frames.height() ||
        out.width() != 2 * frames.width()) {
      throw ShapeError("super-resolution plugin returned the wrong dimensions");
    }
    return out;
  }
  const std::size_t h = frames.height(), w = frames.width();
  VideoFrames out(frames.views(), frames.frames(), 2 * h, 2 * w);
  for (std::size_t v = 0; v < frames.views(); ++v) {
    for (std::size_t t = 0; t < frames.frames(); ++t) {
      for (std::size_t y = 0; y < 2 * h; ++y) {
        const std::size_t y0 = y / 2, y1 = std::min(y0 + 1, h - 1);
        const double fy = (y % 2) * 0.5;
        for (std::size_t x = 0; x < 2 * w; ++x) {
          const std::size_t x0 = x / 2, x1 = std::min(x0 + 1, w - 1);
          const double fx = (x % 2) * 0.5;
          for (std::size_t c = 0; c < 3; ++c) {
            const double top = (1.0 - fx) * frames.at(v, t, y0, x0, c) + fx * frames.at(v, t, y0, x1, c);
            const double bottom = (1.0 - fx) * frames.at(v, t, y1, x0, c) + fx * frames.at(v, t, y1, x1, c);
            out.at(v, t, y, x, c) = static_cast<float>((1.0 - fy) * top + fy * bottom);
          }
        }
      }
    }
  }
  return out;
}

GenerateResult generate(const SceneSequence& scene, const DenoiserWeights& stage1, const DenoiserWeights& stage2,
                        const RunConfig& config, const SuperResolver& plugin, std::ostream* log) {
  config.validate();
  if (!(stage1.config == stage2.config)) throw ConfigError("stage weights use different architectures");
  RunConfig effective = config;
  effective.denoiser = stage1.config;
  effective.validate();
  if (config.sr == SrMode::plugin && !plugin) throw ConfigError("super-resolution plugin selected but none is installed");
  const std::size_t frames = config.frames;
  const SceneSequence prepared = prepare_scene(scene, config, frames);
  const ControlTensor control = render_sequence(prepared, RenderOptions{config.width, config.height, config.d_max,
                                                                        Palette::standard()});
  const std::vector<double> text = text_for(scene, effective);
  const NoiseSchedule schedule = config.schedule();
  const SeededRng root(config.seed);
  if (log) {
    *log << "generate: lambda_infer=" << config.lambda_infer << " steps=" << config.ddim_steps
         << " seed=" << config.seed << " views=" << scene.views << " frames=" << frames << " sr=" << to_string(config.sr)
         << '\n';
  }

  SamplerOptions options;
  options.num_steps = config.ddim_steps;
  if (config.clip_denoised > 0.0) options.clip_denoised = config.clip_denoised;

  const LatentShape one{1, config.height / kFactor, config.width / kFactor, scene.views, LatentCodec::kLatentChannels};
  const Tensor control1 = pool_control(control, 0, 1, kFactor);
  GenerateResult result;
  result.first_frame_latent = sample(
      [&](const LatentVideo& x, std::size_t step) {
        DenoiserInput in{x, step, text, std::nullopt, control1, DenoiserMode::image};
        return predict_noise(stage1, in);
      },
      schedule, one, root.split("stage1"), options);

  LatentShape clip_shape = one;
  clip_shape.frames = frames;
  if (frames == 1) {
    result.video_latent = result.first_frame_latent;
  } else {
    const Tensor control_all = pool_control(control, 0, frames, kFactor);
    const LatentVideo condition = build_condition(clip_shape, result.first_frame_latent);
    options.prior = NoisePrior{result.first_frame_latent, config.lambda_infer, 1};
    result.video_latent = sample(
        [&](const LatentVideo& x, std::size_t step) {
          DenoiserInput in{x, step, text, condition, control_all, DenoiserMode::video};
          return predict_noise(stage2, in);
        },
        schedule, clip_shape, root.split("stage2"), options);
    result.video_latent.set_frame(0, result.first_frame_latent);
  }

  VideoFrames decoded = decode_frames(result.video_latent);
  for (float& v : decoded.values()) v = std::clamp(v, 0.0f, 1.0f);
  result.frames = super_resolve(decoded, config.sr, plugin);
  return result;
}

}  // namespace panoforge
