// SPDX-License-Identifier: Apache-2.0
#include "panoforge/denoiser.hpp"

#include <cmath>
#include <memory>
#include <numbers>
#include <string>

#include "panoforge/attention.hpp"
#include "panoforge/autodiff.hpp"
#include "panoforge/error.hpp"

namespace panoforge {
namespace {

using ad::Tape;
using ad::Var;
using Shapes = std::map<std::string, std::vector<std::size_t>>;

std::string join(const std::string& a, const std::string& b) { return a + "." + b; }
std::string level_name(const std::string& prefix, std::size_t l) { return prefix + "." + std::to_string(l); }
std::string block_name(const std::string& prefix, std::size_t l, std::size_t b) {
  return level_name(prefix, l) + "." + std::to_string(b);
}

const char* const kAttentionKinds[] = {"intra", "view", "frame"};

void add_norm(Shapes& s, const std::string& p, std::size_t c) {
  s[join(p, "gamma")] = {c};
  s[join(p, "beta")] = {c};
}

void add_conv(Shapes& s, const std::string& p, std::size_t co, std::size_t ci, std::size_t k) {
  s[join(p, "weight")] = {co, ci, k, k};
  s[join(p, "bias")] = {co};
}

void add_block(Shapes& s, const std::string& p, std::size_t c, std::size_t embed, bool attention) {
  add_norm(s, p + ".conv.norm", c);
  s[p + ".conv.emb.weight"] = {2 * c, embed};
  s[p + ".conv.emb.bias"] = {2 * c};
  add_conv(s, p + ".conv", c, c, 3);
  if (attention) {
    for (const char* kind : kAttentionKinds) {
      const std::string a = join(p, kind);
      add_norm(s, a + ".norm", c);
      s[a + ".q"] = {c, c};
      s[a + ".k"] = {c, c};
      s[a + ".v"] = {c, c};
      s[a + ".o.weight"] = {c, c};
      s[a + ".o.bias"] = {c};
    }
  }
  add_norm(s, p + ".ff.norm", c);
  add_conv(s, p + ".ff.fc1", 2 * c, c, 1);
  add_conv(s, p + ".ff.fc2", c, 2 * c, 1);
}

void add_encoder(Shapes& s, const DenoiserConfig& cfg, const std::string& root) {
  const std::string enc = root.empty() ? "enc" : root + ".enc";
  const std::string down = root.empty() ? "down" : root + ".down";
  for (std::size_t l = 0; l < cfg.levels; ++l) {
    for (std::size_t b = 0; b < cfg.blocks_per_level; ++b) {
      add_block(s, block_name(enc, l, b), cfg.channels(l), cfg.embed_dim(), cfg.attention_at(l));
    }
    if (l + 1 < cfg.levels) add_conv(s, level_name(down, l), cfg.channels(l + 1), cfg.channels(l), 3);
  }
}

bool is_norm_gamma(const std::string& name) { return name.ends_with(".gamma"); }
bool is_bias(const std::string& name) {
  return name.ends_with(".bias") || name.ends_with(".beta");
}

std::vector<double> sinusoid(std::size_t step, std::size_t dim) {
  std::vector<double> out(dim, 0.0);
  const std::size_t half = dim / 2;
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    out[i] = std::sin(static_cast<double>(step) * freq);
    out[half + i] = std::cos(static_cast<double>(step) * freq);
  }
  return out;
}

Tensor latent_to_planes(const LatentVideo& x) {
  const std::size_t n = x.frames() * x.views();
  const std::size_t c = x.channels(), h = x.height(), w = x.view_width();
  Tensor out({n, c, h, w});
  for (std::size_t t = 0; t < x.frames(); ++t)
    for (std::size_t v = 0; v < x.views(); ++v)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t xx = 0; xx < w; ++xx)
            out[(((t * x.views() + v) * c + ch) * h + y) * w + xx] = x.at_view(t, v, y, xx, ch);
  return out;
}

LatentVideo planes_to_latent(const Tensor& planes, const LatentShape& shape) {
  LatentVideo out(shape);
  const std::size_t c = shape.channels, h = shape.height, w = shape.view_width;
  for (std::size_t t = 0; t < shape.frames; ++t)
    for (std::size_t v = 0; v < shape.views; ++v)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t xx = 0; xx < w; ++xx)
            out.at_view(t, v, y, xx, ch) = planes[(((t * shape.views + v) * c + ch) * h + y) * w + xx];
  return out;
}

/// Builds the forward graph on a tape, binding parameters on first use.
class Network {
 public:
  Network(Tape& tape, const DenoiserWeights& weights, const DenoiserInput& input, const FeatureTrace& trace)
      : tape_(tape), w_(weights), cfg_(weights.config), input_(input), trace_(trace) {
    const LatentShape& shape = input.x_t.shape();
    frames_ = shape.frames;
    views_ = shape.views;
    video_ = input.mode == DenoiserMode::video;
  }

  Var run() {
    const LatentShape& shape = input_.x_t.shape();
    const Var x = tape_.constant(build_network_input(input_.x_t, input_.condition, cfg_.condition_channels));

    std::vector<double> text = input_.text;
    if (text.empty()) text.assign(cfg_.text_dim, 0.0);
    if (text.size() != cfg_.text_dim) throw ShapeError("text embedding has " + std::to_string(text.size()) + " values");
    const std::vector<double> sin = sinusoid(input_.step, cfg_.base_channels);
    Var emb = tape_.linear(tape_.constant(Tensor({sin.size()}, sin)), p("time.fc1.weight"), p("time.fc1.bias"));
    emb = tape_.linear(tape_.silu(emb), p("time.fc2.weight"), p("time.fc2.bias"));
    emb = tape_.add(emb, tape_.linear(tape_.constant(Tensor({text.size()}, text)), p("text.proj.weight"),
                                      p("text.proj.bias")));
    semb_ = tape_.silu(emb);

    std::vector<Var> skips(cfg_.levels);
    Var h = conv(x, "conv_in", 1);
    for (std::size_t l = 0; l < cfg_.levels; ++l) {
      for (std::size_t b = 0; b < cfg_.blocks_per_level; ++b) h = block(h, block_name("enc", l, b), l);
      skips[l] = h;
      if (l + 1 < cfg_.levels) h = conv(h, level_name("down", l), 2);
    }

    std::vector<Var> residual;
    if (input_.control) {
      const Tensor& ctrl = *input_.control;
      if (ctrl.rank() != 4 || ctrl.dim(0) != frames_ * views_ || ctrl.dim(1) != cfg_.control_channels ||
          ctrl.dim(2) != shape.height || ctrl.dim(3) != shape.view_width) {
        throw ShapeError("pooled control " + shape_string(ctrl.shape()) + " does not match the latent");
      }
      Var a = conv(tape_.constant(ctrl), "control.adapter.conv1", 1);
      a = conv(tape_.silu(a), "control.adapter.conv2", 1);
      Var hc = tape_.add(conv(x, "control.conv_in", 1), a);
      for (std::size_t l = 0; l < cfg_.levels; ++l) {
        for (std::size_t b = 0; b < cfg_.blocks_per_level; ++b) hc = block(hc, block_name("control.enc", l, b), l);
        residual.push_back(tape_.conv2d(hc, p(level_name("control.zero", l) + ".weight"),
                                        p(level_name("control.zero", l) + ".bias"), 1, 0));
        if (l + 1 < cfg_.levels) hc = conv(hc, level_name("control.down", l), 2);
      }
    }

    for (std::size_t l = cfg_.levels; l-- > 0;) {
      if (l + 1 < cfg_.levels) {
        h = conv(tape_.upsample_nearest(h, 2), level_name("up", l), 1);
        h = tape_.add(h, skips[l]);
      }
      if (!residual.empty()) h = tape_.add(h, residual[l]);
      for (std::size_t b = 0; b < cfg_.blocks_per_level; ++b) h = block(h, block_name("dec", l, b), l);
    }
    h = tape_.silu(norm(h, "out.norm"));
    return conv(h, "out.conv", 1);
  }

 private:
  Var p(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    Var v = tape_.parameter(name, w_.at(name));
    bound_.emplace(name, v);
    return v;
  }

  Var conv(Var x, const std::string& name, std::size_t stride) {
    const std::size_t k = w_.at(name + ".weight").dim(2);
    return tape_.conv2d(x, p(name + ".weight"), p(name + ".bias"), stride, k / 2);
  }

  Var norm(Var x, const std::string& name) {
    return tape_.group_norm(x, p(name + ".gamma"), p(name + ".beta"), cfg_.groups);
  }

  void emit(const std::string& name, Var v) {
    if (trace_) trace_(name, tape_.value(v));
  }

  std::shared_ptr<const AttentionPlan> plan(std::size_t level, const std::string& kind, std::size_t positions) {
    const std::string key = std::to_string(level) + kind;
    auto it = plans_.find(key);
    if (it != plans_.end()) return it->second;
    AttentionPlan built;
    if (kind == "intra") built = intra_view_plan(frames_, views_, positions);
    else if (kind == "view") built = cross_view_plan(frames_, views_, positions, ViewAdjacency::cyclic(views_));
    else built = cross_frame_plan(frames_, views_, positions);
    auto shared = std::make_shared<const AttentionPlan>(std::move(built));
    plans_.emplace(key, shared);
    return shared;
  }

  Var attend(Var h, const std::string& prefix, std::size_t level, const std::string& kind) {
    const Tensor& hv = tape_.value(h);
    const std::size_t height = hv.dim(2), width = hv.dim(3);
    const std::string a = join(prefix, kind);
    Var tokens = tape_.to_tokens(norm(h, a + ".norm"));
    Var q = tape_.token_linear(tokens, p(a + ".q"), ad::kNone);
    Var k = tape_.token_linear(tokens, p(a + ".k"), ad::kNone);
    Var v = tape_.token_linear(tokens, p(a + ".v"), ad::kNone);
    Var o = tape_.attention(q, k, v, plan(level, kind, height * width), cfg_.heads);
    o = tape_.token_linear(o, p(a + ".o.weight"), p(a + ".o.bias"));
    Var out = tape_.add(h, tape_.from_tokens(o, height, width));
    emit(a, out);
    return out;
  }

  Var block(Var h, const std::string& prefix, std::size_t level) {
    Var a = norm(h, prefix + ".conv.norm");
    a = tape_.modulate(a, tape_.linear(semb_, p(prefix + ".conv.emb.weight"), p(prefix + ".conv.emb.bias")));
    a = conv(tape_.silu(a), prefix + ".conv", 1);
    h = tape_.add(h, a);
    emit(prefix + ".conv", h);
    if (cfg_.attention_at(level)) {
      h = attend(h, prefix, level, "intra");
      // One view has no neighbors and one frame attends only to itself; both
      // sub-blocks then reduce to the identity and are skipped.
      if (views_ > 1) h = attend(h, prefix, level, "view");
      if (video_ && frames_ > 1) h = attend(h, prefix, level, "frame");
    }
    Var f = conv(norm(h, prefix + ".ff.norm"), prefix + ".ff.fc1", 1);
    f = conv(tape_.silu(f), prefix + ".ff.fc2", 1);
    h = tape_.add(h, f);
    emit(prefix + ".ff", h);
    return h;
  }

  Tape& tape_;
  const DenoiserWeights& w_;
  const DenoiserConfig& cfg_;
  const DenoiserInput& input_;
  FeatureTrace trace_;
  std::size_t frames_ = 1;
  std::size_t views_ = 1;
  bool video_ = true;
  Var semb_ = ad::kNone;
  std::map<std::string, Var> bound_;
  std::map<std::string, std::shared_ptr<const AttentionPlan>> plans_;
};

void check_input(const DenoiserWeights& weights, const DenoiserInput& input) {
  const DenoiserConfig& cfg = weights.config;
  const LatentShape& shape = input.x_t.shape();
  if (shape.channels != cfg.latent_channels) {
    throw ShapeError("latent has " + std::to_string(shape.channels) + " channels, network expects " +
                     std::to_string(cfg.latent_channels));
  }
  const std::size_t m = cfg.spatial_multiple();
  if (shape.height % m != 0 || shape.view_width % m != 0 || shape.height == 0 || shape.view_width == 0) {
    throw ShapeError("latent view size " + std::to_string(shape.height) + "x" + std::to_string(shape.view_width) +
                     " must divide by " + std::to_string(m));
  }
  if (input.condition && !(input.condition->shape() == shape)) throw ShapeError("condition shape differs from latent");
}

std::uint64_t init_label(const std::string& name) { return SeededRng::fnv1a(name); }

}  // namespace

DenoiserConfig DenoiserConfig::tiny() { return DenoiserConfig{}; }

DenoiserConfig DenoiserConfig::generation() {
  DenoiserConfig cfg;
  cfg.base_channels = 8;
  cfg.levels = 3;
  cfg.attention_from_level = 2;
  return cfg;
}

void DenoiserConfig::validate() const {
  if (base_channels < 2 || base_channels % 2 != 0) throw ConfigError("base_channels must be even and >= 2");
  if (levels == 0 || blocks_per_level == 0) throw ConfigError("levels and blocks_per_level must be positive");
  if (heads == 0 || latent_channels == 0 || control_channels == 0 || text_dim == 0 || groups == 0) {
    throw ConfigError("heads, latent, control, text and group counts must be positive");
  }
  if (levels > 16) throw ConfigError("too many levels");
  if (base_channels % groups != 0) throw ConfigError("base_channels must divide by groups");
  for (std::size_t l = 0; l < levels; ++l) {
    if (attention_at(l) && channels(l) % heads != 0) {
      throw ConfigError("attention width " + std::to_string(channels(l)) + " not divisible by heads");
    }
  }
}

std::map<std::string, std::vector<std::size_t>> DenoiserWeights::layout(const DenoiserConfig& cfg) {
  cfg.validate();
  Shapes s;
  const std::size_t e = cfg.embed_dim();
  s["time.fc1.weight"] = {e, cfg.base_channels};
  s["time.fc1.bias"] = {e};
  s["time.fc2.weight"] = {e, e};
  s["time.fc2.bias"] = {e};
  s["text.proj.weight"] = {e, cfg.text_dim};
  s["text.proj.bias"] = {e};
  const std::size_t in = cfg.latent_channels + cfg.condition_channels;
  add_conv(s, "conv_in", cfg.channels(0), in, 3);
  add_encoder(s, cfg, "");
  for (std::size_t l = 0; l + 1 < cfg.levels; ++l) add_conv(s, level_name("up", l), cfg.channels(l), cfg.channels(l + 1), 3);
  for (std::size_t l = 0; l < cfg.levels; ++l)
    for (std::size_t b = 0; b < cfg.blocks_per_level; ++b)
      add_block(s, block_name("dec", l, b), cfg.channels(l), e, cfg.attention_at(l));
  add_norm(s, "out.norm", cfg.channels(0));
  add_conv(s, "out.conv", cfg.latent_channels, cfg.channels(0), 3);

  add_conv(s, "control.conv_in", cfg.channels(0), in, 3);
  add_encoder(s, cfg, "control");
  add_conv(s, "control.adapter.conv1", cfg.channels(0), cfg.control_channels, 3);
  add_conv(s, "control.adapter.conv2", cfg.channels(0), cfg.channels(0), 3);
  for (std::size_t l = 0; l < cfg.levels; ++l) add_conv(s, level_name("control.zero", l), cfg.channels(l), cfg.channels(l), 1);
  return s;
}

DenoiserWeights DenoiserWeights::initialize(const DenoiserConfig& config, std::uint64_t seed) {
  DenoiserWeights w;
  w.config = config;
  const SeededRng root(seed);
  const std::string control_prefix = "control.";
  for (const auto& [name, shape] : layout(config)) {
    Tensor t(shape);
    const bool zero_projection = name.starts_with("control.zero.");
    if (is_norm_gamma(name)) {
      t.fill(1.0);
    } else if (!is_bias(name) && !zero_projection) {
      // Control copies of encoder tensors draw the encoder's stream.
      std::string source = name;
      if (name.starts_with(control_prefix) && !name.starts_with("control.adapter.")) {
        source = name.substr(control_prefix.size());
      }
      SeededRng rng = root.split(init_label(source));
      std::size_t fan_in = 1;
      for (std::size_t a = 1; a < shape.size(); ++a) fan_in *= shape[a];
      const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (double& v : t.values()) v = rng.normal() * scale;
    }
    w.params.emplace(name, std::move(t));
  }
  return w;
}

const Tensor& DenoiserWeights::at(const std::string& name) const {
  auto it = params.find(name);
  if (it == params.end()) throw ShapeError("missing parameter " + name);
  return it->second;
}

std::size_t DenoiserWeights::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += t.size();
  return n;
}

DenoiserMode parse_denoiser_mode(std::string_view text) {
  if (text == "image") return DenoiserMode::image;
  if (text == "video") return DenoiserMode::video;
  throw ConfigError("unknown denoiser mode '" + std::string(text) + "'");
}

std::string_view to_string(DenoiserMode mode) { return mode == DenoiserMode::image ? "image" : "video"; }

Tensor pool_control(const ControlTensor& control, std::size_t first, std::size_t frames, std::size_t factor) {
  if (factor == 0 || control.height() % factor != 0 || control.width() % factor != 0) {
    throw ShapeError("control resolution does not divide by " + std::to_string(factor));
  }
  if (first + frames > control.frames()) throw IndexError("control frame range out of bounds");
  const std::size_t views = control.views();
  const std::size_t h = control.height() / factor, w = control.width() / factor;
  Tensor out({frames * views, kControlChannels, h, w});
  const double inv_area = 1.0 / static_cast<double>(factor * factor);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t v = 0; v < views; ++v) {
      const std::size_t n = t * views + v;
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          for (std::size_t c = 0; c < kControlChannels; ++c) {
            double acc = 0.0;
            for (std::size_t dy = 0; dy < factor; ++dy)
              for (std::size_t dx = 0; dx < factor; ++dx) acc += control.at(v, first + t, y * factor + dy, x * factor + dx, c);
            double mean = acc * inv_area;
            if (c >= kPoseChannel) mean /= 255.0;
            out[((n * kControlChannels + c) * h + y) * w + x] = mean;
          }
        }
      }
    }
  }
  return out;
}

LatentVideo predict_noise(const DenoiserWeights& weights, const DenoiserInput& input, const FeatureTrace& trace) {
  check_input(weights, input);
  Tape tape(false);
  Network net(tape, weights, input, trace);
  const Var out = net.run();
  return planes_to_latent(tape.value(out), input.x_t.shape());
}

LatentVideo build_condition(const LatentShape& shape, const std::optional<LatentVideo>& first_frame) {
  LatentVideo cond(shape);
  if (first_frame) {
    LatentShape one = shape;
    one.frames = 1;
    if (!(first_frame->shape() == one)) throw ShapeError("first-frame latent does not match one clip frame");
    cond.set_frame(0, *first_frame);
  }
  return cond;
}

Tensor build_network_input(const LatentVideo& x_t, const std::optional<LatentVideo>& condition,
                           std::size_t condition_channels) {
  if (condition && condition->channels() != condition_channels) throw ShapeError("condition channel count");
  const std::size_t n = x_t.frames() * x_t.views();
  const std::size_t c = x_t.channels(), h = x_t.height(), w = x_t.view_width();
  const std::size_t total = c + condition_channels;
  Tensor out({n, total, h, w});
  for (std::size_t t = 0; t < x_t.frames(); ++t) {
    for (std::size_t v = 0; v < x_t.views(); ++v) {
      const std::size_t s = t * x_t.views() + v;
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          for (std::size_t ch = 0; ch < c; ++ch) out[((s * total + ch) * h + y) * w + x] = x_t.at_view(t, v, y, x, ch);
          if (!condition) continue;
          for (std::size_t ch = 0; ch < condition_channels; ++ch) {
            out[((s * total + c + ch) * h + y) * w + x] = condition->at_view(t, v, y, x, ch);
          }
        }
      }
    }
  }
  return out;
}

TrainingDraw draw_training(const LatentShape& shape, const NoiseSchedule& schedule, const SeededRng& rng) {
  SeededRng steps = rng.split("step");
  TrainingDraw draw;
  draw.step = static_cast<std::size_t>(steps.below(schedule.steps()));
  draw.noise = draw_noise(shape, rng.split("noise"));
  return draw;
}

TrainingSample make_training_sample(const TrainingBatch& batch, const TrainingDraw& draw,
                                    const NoiseSchedule& schedule, double lambda) {
  const LatentShape& shape = batch.latent.shape();
  if (!(draw.noise.shape() == shape)) throw ShapeError("noise draw does not match the latent");
  if (lambda < 0.0) throw ConfigError("lambda must be non-negative");
  TrainingSample sample;
  sample.target = batch.first_frame ? apply_noise_prior(*batch.first_frame, draw.noise, lambda, 1) : draw.noise;
  sample.input.x_t = forward_diffuse(batch.latent, draw.step, schedule, sample.target);
  sample.input.step = draw.step;
  sample.input.text = batch.text;
  if (batch.first_frame) sample.input.condition = build_condition(shape, batch.first_frame);
  sample.input.control = batch.control;
  sample.input.mode = batch.mode;
  return sample;
}

double training_loss(const SamplePredictor& predictor, const TrainingBatch& batch, const TrainingDraw& draw,
                     const NoiseSchedule& schedule, double lambda) {
  const TrainingSample sample = make_training_sample(batch, draw, schedule, lambda);
  const LatentVideo pred = predictor(sample.input);
  if (!(pred.shape() == sample.target.shape())) throw ShapeError("prediction shape differs from target");
  double acc = 0.0;
  const auto p = pred.values();
  const auto t = sample.target.values();
  for (std::size_t i = 0; i < p.size(); ++i) acc += (p[i] - t[i]) * (p[i] - t[i]);
  return acc / static_cast<double>(p.size());
}

double training_loss(const DenoiserWeights& weights, const TrainingBatch& batch, const TrainingDraw& draw,
                     const NoiseSchedule& schedule, double lambda) {
  return training_loss([&](const DenoiserInput& in) { return predict_noise(weights, in); }, batch, draw,
                       schedule, lambda);
}

double training_loss(const DenoiserWeights& weights, const TrainingBatch& batch, const NoiseSchedule& schedule,
                     double lambda, const SeededRng& rng) {
  return training_loss(weights, batch, draw_training(batch.latent.shape(), schedule, rng), schedule, lambda);
}

LossGradient loss_gradient(const DenoiserWeights& weights, const TrainingBatch& batch, const TrainingDraw& draw,
                           const NoiseSchedule& schedule, double lambda) {
  const TrainingSample sample = make_training_sample(batch, draw, schedule, lambda);
  check_input(weights, sample.input);
  Tape tape(true);
  Network net(tape, weights, sample.input, {});
  const Var pred = net.run();
  const Var loss = tape.mse(pred, tape.constant(latent_to_planes(sample.target)));
  tape.backward(loss);
  LossGradient out;
  out.loss = tape.value(loss)[0];
  out.gradients = tape.parameter_gradients();
  for (const auto& [name, value] : weights.params) {
    if (!out.gradients.count(name)) out.gradients.emplace(name, Tensor(value.shape()));
  }
  return out;
}

LossGradient loss_gradient(const DenoiserWeights& weights, const TrainingBatch& batch, const NoiseSchedule& schedule,
                           double lambda, const SeededRng& rng) {
  return loss_gradient(weights, batch, draw_training(batch.latent.shape(), schedule, rng), schedule, lambda);
}

void sgd_step_in_place(DenoiserWeights& weights, const ParameterSet& gradients, double lr) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be finite and non-negative");
  if (gradients.size() != weights.params.size()) throw ShapeError("gradient set does not match the weights");
  for (const auto& [name, g] : gradients) {
    auto it = weights.params.find(name);
    if (it == weights.params.end()) throw ShapeError("gradient for unknown parameter " + name);
    if (!it->second.same_shape(g)) throw ShapeError("gradient shape mismatch for " + name);
  }
  if (lr == 0.0) return;
  for (auto& [name, w] : weights.params) {
    const Tensor& g = gradients.at(name);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
  }
}

DenoiserWeights sgd_step(const DenoiserWeights& weights, const ParameterSet& gradients, double lr) {
  DenoiserWeights out = weights;
  sgd_step_in_place(out, gradients, lr);
  return out;
}

}  // namespace panoforge
