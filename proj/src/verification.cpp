// SPDX-License-Identifier: Apache-2.0
#include "panoforge/verification.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "panoforge/attention.hpp"
#include "panoforge/error.hpp"
#include "panoforge/rng.hpp"

namespace panoforge {
namespace {

double max_abs_diff(const TokenGrid& a, const TokenGrid& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.values().size(); ++i) worst = std::max(worst, std::fabs(a.values()[i] - b.values()[i]));
  return worst;
}

TokenGrid random_grid(SeededRng& rng, std::size_t t, std::size_t v, std::size_t s, std::size_t c) {
  TokenGrid g(t, v, s, c);
  for (double& x : g.values()) x = rng.normal();
  return g;
}

struct GridIndex {
  std::size_t views, positions;
  std::size_t frame(std::size_t i) const { return i / (views * positions); }
  std::size_t view(std::size_t i) const { return (i / positions) % views; }
  std::size_t position(std::size_t i) const { return i % positions; }
};

}  // namespace

double AttentionTrial::max_deviation() const {
  return std::max({intra_deviation, view_deviation, frame_deviation});
}

std::uint64_t trial_seed(std::uint64_t base_seed, std::size_t trial) {
  SeededRng rng = SeededRng(base_seed).split(static_cast<std::uint64_t>(trial));
  return rng.next_u64();
}

AttentionTrial run_attention_trial(std::uint64_t seed, bool inject_fault, double tolerance) {
  SeededRng rng(seed);
  AttentionTrial trial;
  trial.seed = seed;
  trial.frames = 1 + rng.below(4);
  trial.views = 1 + rng.below(4);
  trial.positions = 1 + rng.below(9);
  trial.width = 1 + rng.below(8);
  std::vector<std::size_t> divisors;
  for (std::size_t h = 1; h <= trial.width; ++h)
    if (trial.width % h == 0) divisors.push_back(h);
  trial.heads = divisors[rng.below(divisors.size())];

  const TokenGrid q = random_grid(rng, trial.frames, trial.views, trial.positions, trial.width);
  const TokenGrid k = random_grid(rng, trial.frames, trial.views, trial.positions, trial.width);
  const TokenGrid v = random_grid(rng, trial.frames, trial.views, trial.positions, trial.width);
  const AttentionOptions opts{trial.heads, nullptr};
  const GridIndex ix{trial.views, trial.positions};
  const ViewAdjacency adjacency = ViewAdjacency::cyclic(trial.views);

  const TokenGrid intra = intra_view_attention(q, k, v, opts);
  const TokenGrid intra_ref = joint_attention_oracle(
      q, k, v, [&](std::size_t a, std::size_t b) { return ix.frame(a) == ix.frame(b) && ix.view(a) == ix.view(b); }, opts);
  trial.intra_deviation = max_abs_diff(intra, intra_ref);

  TokenGrid view = cross_view_attention(q, k, v, adjacency, opts);
  if (inject_fault) view.values()[0] += 1e-3;
  if (trial.views == 1) {
    trial.view_deviation = max_abs_diff(view, q);
  } else {
    const TokenGrid view_ref = joint_attention_oracle(
        q, k, v,
        [&](std::size_t a, std::size_t b) {
          if (ix.frame(a) != ix.frame(b)) return false;
          const auto& n = adjacency.neighbors(ix.view(a));
          return std::find(n.begin(), n.end(), ix.view(b)) != n.end();
        },
        opts);
    trial.view_deviation = max_abs_diff(view, view_ref);
  }

  const TokenGrid frame = cross_frame_attention(q, k, v, opts);
  const TokenGrid frame_ref = joint_attention_oracle(
      q, k, v,
      [&](std::size_t a, std::size_t b) { return ix.view(a) == ix.view(b) && ix.position(a) == ix.position(b); }, opts);
  trial.frame_deviation = max_abs_diff(frame, frame_ref);

  trial.passed = trial.max_deviation() < tolerance;
  return trial;
}

std::string layer_type(const std::string& p) {
  if (p.starts_with("control.zero.")) return "control_projection";
  if (p.starts_with("control.adapter.")) return "control_adapter";
  if (p.starts_with("time.")) return "time";
  if (p.starts_with("text.")) return "text";
  if (p.ends_with(".gamma") || p.ends_with(".beta")) return "norm";
  if (p.find(".conv.emb.") != std::string::npos) return "modulation";
  if (p.find(".intra.") != std::string::npos || p.find(".view.") != std::string::npos ||
      p.find(".frame.") != std::string::npos) {
    return "attention";
  }
  if (p.find(".ff.") != std::string::npos) return "feedforward";
  return "conv";
}

GradientCheck run_gradient_check(std::uint64_t seed, std::size_t samples, double h, double tolerance) {
  const SeededRng root(seed);
  DenoiserWeights weights = DenoiserWeights::initialize(DenoiserConfig::tiny(), seed);
  SeededRng perturb = root.split("projections");
  for (auto& [name, t] : weights.params) {
    if (name.starts_with("control.zero.")) {
      for (double& x : t.values()) x = 0.1 * perturb.normal();
    }
  }

  const LatentShape shape{2, 8, 16, 2, weights.config.latent_channels};
  TrainingBatch batch;
  batch.latent = draw_noise(shape, root.split("latent"));
  batch.first_frame = batch.latent.frame(0);
  Tensor control({shape.frames * shape.views, weights.config.control_channels, shape.height, shape.view_width});
  SeededRng control_rng = root.split("control");
  for (double& x : control.values()) x = control_rng.uniform();
  batch.control = std::move(control);
  batch.text.assign(weights.config.text_dim, 0.0);
  SeededRng text_rng = root.split("text");
  for (double& x : batch.text) x = text_rng.normal();
  batch.mode = DenoiserMode::video;

  const NoiseSchedule schedule = NoiseSchedule::cosine();
  const TrainingDraw draw = draw_training(shape, schedule, root.split("draw"));
  const double lambda = 0.05;
  const LossGradient analytic = loss_gradient(weights, batch, draw, schedule, lambda);

  std::map<std::string, std::vector<std::string>> families;
  for (const auto& [name, t] : weights.params) families[layer_type(name)].push_back(name);

  GradientCheck check;
  SeededRng pick = root.split("pick");
  auto family = families.begin();
  while (check.samples.size() < samples) {
    const auto& names = family->second;
    const std::string& name = names[pick.below(names.size())];
    const std::size_t index = pick.below(weights.params.at(name).size());
    const double original = weights.params.at(name)[index];
    weights.params.at(name)[index] = original + h;
    const double up = training_loss(weights, batch, draw, schedule, lambda);
    weights.params.at(name)[index] = original - h;
    const double down = training_loss(weights, batch, draw, schedule, lambda);
    weights.params.at(name)[index] = original;

    GradientSample s;
    s.parameter = name;
    s.index = index;
    s.layer_type = family->first;
    s.analytic = analytic.gradients.at(name)[index];
    s.numeric = (up - down) / (2.0 * h);
    s.relative_error = std::fabs(s.analytic - s.numeric) / (std::fabs(s.analytic) + 1e-6);
    check.max_relative_error = std::max(check.max_relative_error, s.relative_error);
    check.layer_types.insert(s.layer_type);
    check.samples.push_back(std::move(s));
    if (++family == families.end()) family = families.begin();
  }
  check.passed = check.max_relative_error < tolerance;
  return check;
}

OracleCheckReport run_oracle_check(const OracleCheckOptions& options) {
  if (options.trials == 0) throw ConfigError("trials must be at least 1");
  OracleCheckReport report;
  report.passed = true;
  for (std::size_t i = 0; i < options.trials; ++i) {
    const AttentionTrial trial = run_attention_trial(trial_seed(options.seed, i), options.inject_fault);
    ++report.trials;
    report.max_attention_deviation = std::max(report.max_attention_deviation, trial.max_deviation());
    if (!trial.passed && !report.failing_seed) {
      report.failing_seed = trial.seed;
      report.passed = false;
    }
  }
  if (options.gradient_suite) {
    report.gradient = run_gradient_check(options.seed, options.gradient_samples);
    report.passed = report.passed && report.gradient->passed;
  }
  return report;
}

}  // namespace panoforge
