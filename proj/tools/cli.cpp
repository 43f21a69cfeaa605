// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "panoforge/checkpoint.hpp"
#include "panoforge/codec.hpp"
#include "panoforge/error.hpp"
#include "panoforge/geometry.hpp"
#include "panoforge/layout.hpp"
#include "panoforge/metrics.hpp"
#include "panoforge/pipeline.hpp"
#include "panoforge/scene.hpp"
#include "panoforge/tensor_io.hpp"
#include "panoforge/verification.hpp"

namespace panoforge::cli {
namespace {

namespace fs = std::filesystem;

void require_file(const std::string& path, const char* what) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) throw IoError(std::string(what) + " not found: " + path);
}

void require_directory(const std::string& path, const char* what) {
  std::error_code ec;
  if (!fs::is_directory(path, ec)) throw IoError(std::string(what) + " not found: " + path);
}

void prepare_output_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

void prepare_output_file(const fs::path& file) {
  if (file.has_parent_path()) prepare_output_dir(file.parent_path());
}

std::string frame_name(std::size_t t, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%03zu.%s", t, ext);
  return buf;
}

std::vector<std::uint8_t> to_bytes(const std::vector<float>& rgb) {
  std::vector<std::uint8_t> out(rgb.size());
  for (std::size_t i = 0; i < rgb.size(); ++i) out[i] = quantize_u8(rgb[i]);
  return out;
}

struct RenderArgs {
  std::string scene, out, previews;
  std::size_t width = 512, height = 256;
  std::size_t calib_width = 0, calib_height = 0;
  double dmax = 50.0;
};

int cmd_render(const RenderArgs& a, std::ostream& out) {
  require_file(a.scene, "scene");
  prepare_output_file(a.out);
  if (!a.previews.empty()) prepare_output_dir(a.previews);
  SceneSequence scene = load_scene(a.scene);
  const std::size_t cw = a.calib_width ? a.calib_width : a.width;
  const std::size_t ch = a.calib_height ? a.calib_height : a.height;
  if (cw != a.width || ch != a.height) {
    scene = rescale_intrinsics(std::move(scene), static_cast<double>(a.width) / static_cast<double>(cw),
                               static_cast<double>(a.height) / static_cast<double>(ch));
  }
  const ControlTensor control = render_sequence(scene, RenderOptions{a.width, a.height, a.dmax, Palette::standard()});
  write_control_tensor(a.out, control);
  if (!a.previews.empty()) write_control_previews(a.previews, control);
  const auto d = control.dims();
  out << "control tensor (" << d[0] << ", " << d[1] << ", " << d[2] << ", " << d[3] << ", " << d[4] << ") -> "
      << a.out << '\n';
  return kOk;
}

struct TrainArgs {
  int stage = 1;
  std::string scenes, config, out;
  std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  require_directory(a.scenes, "scene directory");
  require_file(a.config, "config");
  prepare_output_dir(a.out);
  RunConfig config = load_run_config(a.config);
  if (a.seed) config.seed = *a.seed;
  const std::vector<SceneSequence> scenes = load_scene_directory(a.scenes);
  const TrainResult result = a.stage == 1 ? train_stage1(scenes, config, &out) : train_stage2(scenes, config, &out);
  save_checkpoint(a.out, result.weights);
  write_loss_history(fs::path(a.out) / "loss_history.csv", result.loss_history);
  out << "checkpoint -> " << a.out << '\n';
  return kOk;
}

struct GenerateArgs {
  std::string scene, ckpt1, ckpt2, config, out, sr;
  std::optional<std::uint64_t> seed;
};

int cmd_generate(const GenerateArgs& a, std::ostream& out) {
  require_file(a.scene, "scene");
  require_file(a.config, "config");
  require_directory(a.ckpt1, "stage-1 checkpoint");
  require_directory(a.ckpt2, "stage-2 checkpoint");
  prepare_output_dir(a.out);
  RunConfig config = load_run_config(a.config);
  if (!a.sr.empty()) config.sr = parse_sr_mode(a.sr);
  if (a.seed) config.seed = *a.seed;
  const SceneSequence scene = load_scene(a.scene);
  const DenoiserWeights w1 = load_checkpoint(a.ckpt1);
  const DenoiserWeights w2 = load_checkpoint(a.ckpt2);
  const GenerateResult result = generate(scene, w1, w2, config, {}, &out);
  const VideoFrames& frames = result.frames;
  const fs::path dir(a.out);
  for (std::size_t t = 0; t < frames.frames(); ++t) {
    const std::vector<std::uint64_t> dims = {frames.views(), frames.height(), frames.width(), 3};
    write_pnc1(dir / frame_name(t, "pnc1"), dims, frames.frame_views(t));
    write_ppm(dir / frame_name(t, "ppm"), frames.views() * frames.width(), frames.height(), to_bytes(frames.panorama(t)));
  }
  write_video_frames(dir / "video.pnc1", frames);
  out << "video (" << frames.views() << ", " << frames.frames() << ", " << frames.height() << ", " << frames.width()
      << ", 3) -> " << (dir / "video.pnc1").string() << '\n';
  return kOk;
}

struct OracleArgs {
  std::size_t trials = 100;
  std::uint64_t seed = 0;
  bool inject_fault = false;
  bool skip_gradient = false;
  std::optional<std::uint64_t> replay;
};

int cmd_oracle(const OracleArgs& a, std::ostream& out, std::ostream& err) {
  out << std::setprecision(3) << std::scientific;
  if (a.replay) {
    const AttentionTrial t = run_attention_trial(*a.replay, a.inject_fault);
    out << "replay seed=" << t.seed << " T=" << t.frames << " V=" << t.views << " S=" << t.positions
        << " c=" << t.width << " heads=" << t.heads << " intra=" << t.intra_deviation << " view=" << t.view_deviation
        << " frame=" << t.frame_deviation << (t.passed ? " PASS" : " FAIL") << '\n';
    return t.passed ? kOk : kCheckFailed;
  }
  if (a.trials == 0) throw ConfigError("--trials must be at least 1");
  OracleCheckOptions options;
  options.trials = a.trials;
  options.seed = a.seed;
  options.inject_fault = a.inject_fault;
  options.gradient_suite = !a.skip_gradient;
  const OracleCheckReport report = run_oracle_check(options);
  out << "attention: trials=" << report.trials << " max_deviation=" << report.max_attention_deviation << '\n';
  if (report.gradient) {
    out << "gradient: samples=" << report.gradient->samples.size()
        << " layer_types=" << report.gradient->layer_types.size()
        << " max_relative_error=" << report.gradient->max_relative_error << '\n';
  }
  if (report.failing_seed) err << "attention check failed; replay with --replay " << *report.failing_seed << '\n';
  if (report.gradient && !report.gradient->passed) err << "gradient check failed\n";
  out << (report.passed ? "PASS" : "FAIL") << '\n';
  return report.passed ? kOk : kCheckFailed;
}

struct AblateArgs {
  std::string lambdas = "0,0.05,0.06,0.07,0.08";
  std::string scene, ckpt1, ckpt2, config, out;
  std::optional<std::uint64_t> seed;
};

int cmd_ablate(const AblateArgs& a, std::ostream& out, std::ostream& err) {
  const std::vector<double> lambdas = parse_lambda_list(a.lambdas, err);
  require_file(a.scene, "scene");
  require_file(a.config, "config");
  if (a.ckpt1.empty() != a.ckpt2.empty()) throw ConfigError("give both --ckpt1 and --ckpt2 or neither");
  if (!a.ckpt1.empty()) {
    require_directory(a.ckpt1, "stage-1 checkpoint");
    require_directory(a.ckpt2, "stage-2 checkpoint");
  }
  prepare_output_file(a.out);
  RunConfig config = load_run_config(a.config);
  if (a.seed) config.seed = *a.seed;
  const SceneSequence scene = load_scene(a.scene);
  const DenoiserWeights w1 = a.ckpt1.empty() ? DenoiserWeights::initialize(config.denoiser, config.seed)
                                              : load_checkpoint(a.ckpt1);
  const DenoiserWeights w2 = a.ckpt2.empty() ? DenoiserWeights::initialize(config.denoiser, config.seed + 1)
                                              : load_checkpoint(a.ckpt2);
  const SceneSequence prepared = prepare_scene(scene, config, config.frames);
  const VideoFrames reference = synthesize_frames(
      render_sequence(prepared, RenderOptions{config.width, config.height, config.d_max, Palette::standard()}));

  std::ofstream csv(a.out);
  if (!csv) throw IoError("cannot write " + a.out);
  csv << "lambda,fd,temporal_consistency,seam\n" << std::setprecision(10);
  for (double lambda : lambdas) {
    RunConfig run = config;
    run.lambda_infer = lambda;
    const GenerateResult result = generate(scene, w1, w2, run, {}, &out);
    const MetricsReport m = evaluate_metrics(result.frames, reference);
    csv << lambda << ',' << m.fd << ',' << m.temporal_consistency << ',' << m.seam << '\n';
  }
  if (!csv) throw IoError("write failed for " + a.out);
  out << lambdas.size() << " rows -> " << a.out << '\n';
  return kOk;
}

struct MetricsArgs {
  std::string video, reference, out;
};

int cmd_metrics(const MetricsArgs& a, std::ostream& out) {
  require_file(a.video, "video");
  require_file(a.reference, "reference");
  if (!a.out.empty()) prepare_output_file(a.out);
  const MetricsReport report = evaluate_metrics(read_video_frames(a.video), read_video_frames(a.reference));
  const std::string json = metrics_to_json(report);
  if (!a.out.empty()) {
    std::ofstream file(a.out);
    file << json << '\n';
    if (!file) throw IoError("cannot write " + a.out);
  }
  out << json << '\n';
  return kOk;
}

}  // namespace

std::vector<double> parse_lambda_list(const std::string& text, std::ostream& err) {
  std::vector<double> out;
  std::stringstream stream(text);
  std::string item;
  while (std::getline(stream, item, ',')) {
    const auto first = item.find_first_not_of(" \t");
    const auto last = item.find_last_not_of(" \t");
    if (first == std::string::npos) throw ConfigError("empty entry in lambda list '" + text + "'");
    item = item.substr(first, last - first + 1);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), value);
    if (ec != std::errc() || ptr != item.data() + item.size() || !std::isfinite(value)) {
      throw ConfigError("lambda '" + item + "' is not a number");
    }
    if (value < 0.0) throw ConfigError("lambda " + item + " is negative");
    if (std::find(out.begin(), out.end(), value) != out.end()) {
      err << "warning: duplicate lambda " << item << " ignored\n";
      continue;
    }
    out.push_back(value);
  }
  if (out.empty()) throw ConfigError("lambda list is empty");
  return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Layout-conditioned multi-view video diffusion toolkit", "panoforge"};
  app.require_subcommand(1);

  RenderArgs render;
  auto* r = app.add_subcommand("render-layout", "Rasterize a scene into the 19-channel control tensor");
  r->add_option("--scene", render.scene, "Scene JSON")->required();
  r->add_option("--out", render.out, "Output PNC1")->required();
  r->add_option("--width", render.width, "View width in pixels")->check(CLI::Range(8, 1 << 16));
  r->add_option("--height", render.height, "View height in pixels")->check(CLI::Range(8, 1 << 16));
  r->add_option("--dmax", render.dmax, "Depth range in meters")->check(CLI::PositiveNumber);
  r->add_option("--calib-width", render.calib_width, "Width the intrinsics refer to (default: --width)");
  r->add_option("--calib-height", render.calib_height, "Height the intrinsics refer to (default: --height)");
  r->add_option("--previews", render.previews, "Directory for PPM previews");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train stage-1 or stage-2 weights");
  t->add_option("--stage", train.stage, "1 (image) or 2 (video)")->required()->check(CLI::IsMember({1, 2}));
  t->add_option("--scenes", train.scenes, "Directory of scene JSON files")->required();
  t->add_option("--config", train.config, "Run config JSON")->required();
  t->add_option("--out", train.out, "Checkpoint directory")->required();
  t->add_option("--seed", train.seed, "Overrides the config seed");

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Two-stage sampling of a multi-view video");
  g->add_option("--scene", gen.scene, "Scene JSON")->required();
  g->add_option("--ckpt1", gen.ckpt1, "Stage-1 checkpoint directory")->required();
  g->add_option("--ckpt2", gen.ckpt2, "Stage-2 checkpoint directory")->required();
  g->add_option("--config", gen.config, "Run config JSON")->required();
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--sr", gen.sr, "Super-resolution: none or resize (overrides config)");
  g->add_option("--seed", gen.seed, "Overrides the config seed");

  OracleArgs oracle;
  auto* o = app.add_subcommand("oracle-check", "Attention oracle and gradient suites");
  o->add_option("--trials", oracle.trials, "Random attention grids");
  o->add_option("--seed", oracle.seed, "Base seed");
  o->add_flag("--inject-fault", oracle.inject_fault, "Perturb the cross-view kernel output");
  o->add_flag("--skip-gradient", oracle.skip_gradient, "Run only the attention suite");
  o->add_option("--replay", oracle.replay, "Re-run one attention trial by its printed seed");

  AblateArgs ablate;
  auto* a = app.add_subcommand("ablate-lambda", "Sweep the inference noise-prior weight");
  a->add_option("--lambdas", ablate.lambdas, "Comma-separated non-negative values");
  a->add_option("--scene", ablate.scene, "Scene JSON")->required();
  a->add_option("--config", ablate.config, "Run config JSON")->required();
  a->add_option("--ckpt1", ablate.ckpt1, "Stage-1 checkpoint (default: initialized from the seed)");
  a->add_option("--ckpt2", ablate.ckpt2, "Stage-2 checkpoint (default: initialized from the seed)");
  a->add_option("--out", ablate.out, "Output CSV")->required();
  a->add_option("--seed", ablate.seed, "Overrides the config seed");

  MetricsArgs metrics;
  auto* m = app.add_subcommand("metrics", "Frechet distance and consistency proxies");
  m->add_option("--video", metrics.video, "Generated video PNC1 (V, T, H, W, 3)")->required();
  m->add_option("--reference", metrics.reference, "Reference video PNC1 (V, T, H, W, 3)")->required();
  m->add_option("--out", metrics.out, "Optional JSON report path");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  }

  try {
    if (r->parsed()) return cmd_render(render, out);
    if (t->parsed()) return cmd_train(train, out);
    if (g->parsed()) return cmd_generate(gen, out);
    if (o->parsed()) return cmd_oracle(oracle, out, err);
    if (a->parsed()) return cmd_ablate(ablate, out, err);
    if (m->parsed()) return cmd_metrics(metrics, out);
  } catch (const SceneError& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kIoError;
  } catch (const DatasetError& e) {
    err << "error: " << e.what() << '\n';
    return kDatasetError;
  } catch (const ShapeError& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const IndexError& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kCheckFailed;
  }
  return kConfigError;
}

}  // namespace panoforge::cli
