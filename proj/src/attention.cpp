// SPDX-License-Identifier: Apache-2.0
#include "panoforge/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "panoforge/error.hpp"
#include "panoforge/parallel.hpp"
#include "panoforge/tensor_io.hpp"

namespace panoforge {
namespace {

void check_inputs(const TokenGrid& q, const TokenGrid& k, const TokenGrid& v, std::size_t heads) {
  if (!q.same_dims(k) || !q.same_dims(v)) throw ShapeError("attention: q, k, v dims differ");
  if (q.width() == 0) throw ShapeError("attention: token width must be positive");
  if (heads == 0 || q.width() % heads != 0) {
    throw ShapeError("attention: width " + std::to_string(q.width()) +
                     " not divisible by heads " + std::to_string(heads));
  }
}

std::vector<char> covered_queries(const AttentionPlan& plan) {
  std::vector<char> covered(plan.tokens, 0);
  for (const AttentionGroup& g : plan.groups)
    for (std::uint32_t qi : g.queries) covered[qi] = 1;
  return covered;
}

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

TokenGrid run_plan(const AttentionPlan& plan, const TokenGrid& q, const TokenGrid& k,
                   const TokenGrid& v, const AttentionOptions& options) {
  check_inputs(q, k, v, options.heads);
  TokenGrid out(q.frames(), q.views(), q.positions(), q.width());
  attention_forward(plan, q.width(), options.heads, q.values().data(), k.values().data(),
                    v.values().data(), out.values().data(), nullptr, options.weights);
  return out;
}

}  // namespace

TokenGrid::TokenGrid(std::size_t frames, std::size_t views, std::size_t positions,
                     std::size_t width, double fill)
    : frames_(frames),
      views_(views),
      positions_(positions),
      width_(width),
      values_(frames * views * positions * width, fill) {}

ViewAdjacency ViewAdjacency::cyclic(std::size_t views) {
  std::vector<std::vector<std::size_t>> lists(views);
  for (std::size_t v = 0; v < views; ++v) {
    lists[v] = {(v + views - 1) % views, (v + 1) % views};
  }
  return from_lists(std::move(lists));
}

ViewAdjacency ViewAdjacency::from_lists(std::vector<std::vector<std::size_t>> neighbors) {
  ViewAdjacency adjacency;
  const std::size_t views = neighbors.size();
  for (std::size_t v = 0; v < views; ++v) {
    std::vector<std::size_t> unique;
    for (std::size_t n : neighbors[v]) {
      if (n >= views) throw ConfigError("adjacency names view " + std::to_string(n) + " out of range");
      if (n != v && std::find(unique.begin(), unique.end(), n) == unique.end()) unique.push_back(n);
    }
    adjacency.neighbors_.push_back(std::move(unique));
  }
  return adjacency;
}

AttentionPlan intra_view_plan(std::size_t frames, std::size_t views, std::size_t positions) {
  AttentionPlan plan{frames * views * positions, {}};
  for (std::size_t slice = 0; slice < frames * views; ++slice) {
    AttentionGroup g;
    for (std::size_t s = 0; s < positions; ++s) g.queries.push_back(static_cast<std::uint32_t>(slice * positions + s));
    g.keys = g.queries;
    plan.groups.push_back(std::move(g));
  }
  return plan;
}

AttentionPlan cross_view_plan(std::size_t frames, std::size_t views, std::size_t positions,
                              const ViewAdjacency& adjacency) {
  if (adjacency.views() != views) throw ShapeError("adjacency view count mismatch");
  AttentionPlan plan{frames * views * positions, {}};
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t v = 0; v < views; ++v) {
      const auto& neighbors = adjacency.neighbors(v);
      if (neighbors.empty()) continue;
      AttentionGroup g;
      for (std::size_t s = 0; s < positions; ++s) {
        g.queries.push_back(static_cast<std::uint32_t>((t * views + v) * positions + s));
      }
      for (std::size_t n : neighbors) {
        for (std::size_t s = 0; s < positions; ++s) {
          g.keys.push_back(static_cast<std::uint32_t>((t * views + n) * positions + s));
        }
      }
      plan.groups.push_back(std::move(g));
    }
  }
  return plan;
}

AttentionPlan cross_frame_plan(std::size_t frames, std::size_t views, std::size_t positions) {
  AttentionPlan plan{frames * views * positions, {}};
  for (std::size_t v = 0; v < views; ++v) {
    for (std::size_t s = 0; s < positions; ++s) {
      AttentionGroup g;
      for (std::size_t t = 0; t < frames; ++t) {
        g.queries.push_back(static_cast<std::uint32_t>((t * views + v) * positions + s));
      }
      g.keys = g.queries;
      plan.groups.push_back(std::move(g));
    }
  }
  return plan;
}

void attention_forward(const AttentionPlan& plan, std::size_t width, std::size_t heads,
                       const double* q, const double* k, const double* v, double* out,
                       AttentionProbs* probs, AttentionWeights* weights) {
  const std::size_t head_dim = width / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  const std::vector<char> covered = covered_queries(plan);
  for (std::size_t i = 0; i < plan.tokens; ++i) {
    if (!covered[i]) std::copy(q + i * width, q + (i + 1) * width, out + i * width);
  }
  if (probs) probs->assign(plan.groups.size(), {});
  if (weights) {
    weights->heads = heads;
    weights->tokens = plan.tokens;
    weights->values.assign(heads * plan.tokens * plan.tokens, 0.0);
  }

  parallel_for(plan.groups.size(), [&](std::size_t gi) {
    const AttentionGroup& g = plan.groups[gi];
    const std::size_t nq = g.queries.size();
    const std::size_t nk = g.keys.size();
    std::vector<double> row(nk);
    std::vector<double>* kept = nullptr;
    if (probs) {
      kept = &(*probs)[gi];
      kept->resize(heads * nq * nk);
    }
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = h * head_dim;
      for (std::size_t i = 0; i < nq; ++i) {
        const double* qrow = q + g.queries[i] * width + off;
        double peak = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < nk; ++j) {
          row[j] = dot(qrow, k + g.keys[j] * width + off, head_dim) * scale;
          peak = std::max(peak, row[j]);
        }
        double total = 0.0;
        for (std::size_t j = 0; j < nk; ++j) {
          row[j] = std::exp(row[j] - peak);
          total += row[j];
        }
        double* orow = out + g.queries[i] * width + off;
        std::fill(orow, orow + head_dim, 0.0);
        for (std::size_t j = 0; j < nk; ++j) {
          const double p = row[j] / total;
          row[j] = p;
          const double* vrow = v + g.keys[j] * width + off;
          for (std::size_t c = 0; c < head_dim; ++c) orow[c] += p * vrow[c];
        }
        if (kept) std::copy(row.begin(), row.end(), kept->begin() + static_cast<std::ptrdiff_t>((h * nq + i) * nk));
        if (weights) {
          for (std::size_t j = 0; j < nk; ++j) {
            weights->values[(h * plan.tokens + g.queries[i]) * plan.tokens + g.keys[j]] = row[j];
          }
        }
      }
    }
  });
}

void attention_backward(const AttentionPlan& plan, std::size_t width, std::size_t heads,
                        const double* q, const double* k, const double* v,
                        const AttentionProbs& probs, const double* d_out, double* dq, double* dk,
                        double* dv) {
  const std::size_t head_dim = width / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  const std::vector<char> covered = covered_queries(plan);
  for (std::size_t i = 0; i < plan.tokens; ++i) {
    if (covered[i]) continue;
    for (std::size_t c = 0; c < width; ++c) dq[i * width + c] += d_out[i * width + c];
  }
  // Sequential over groups: keys may be shared between groups, so the
  // accumulation order into dk and dv stays fixed.
  for (std::size_t gi = 0; gi < plan.groups.size(); ++gi) {
    const AttentionGroup& g = plan.groups[gi];
    const std::size_t nq = g.queries.size();
    const std::size_t nk = g.keys.size();
    const std::vector<double>& p_all = probs.at(gi);
    std::vector<double> dp(nk);
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = h * head_dim;
      for (std::size_t i = 0; i < nq; ++i) {
        const double* p = p_all.data() + (h * nq + i) * nk;
        const double* dorow = d_out + g.queries[i] * width + off;
        double weighted = 0.0;
        for (std::size_t j = 0; j < nk; ++j) {
          dp[j] = dot(dorow, v + g.keys[j] * width + off, head_dim);
          weighted += p[j] * dp[j];
        }
        const double* qrow = q + g.queries[i] * width + off;
        double* dqrow = dq + g.queries[i] * width + off;
        for (std::size_t j = 0; j < nk; ++j) {
          const double ds = p[j] * (dp[j] - weighted) * scale;
          const double* krow = k + g.keys[j] * width + off;
          double* dkrow = dk + g.keys[j] * width + off;
          double* dvrow = dv + g.keys[j] * width + off;
          for (std::size_t c = 0; c < head_dim; ++c) {
            dqrow[c] += ds * krow[c];
            dkrow[c] += ds * qrow[c];
            dvrow[c] += p[j] * dorow[c];
          }
        }
      }
    }
  }
}

TokenGrid intra_view_attention(const TokenGrid& q, const TokenGrid& k, const TokenGrid& v,
                               const AttentionOptions& options) {
  return run_plan(intra_view_plan(q.frames(), q.views(), q.positions()), q, k, v, options);
}

TokenGrid cross_view_attention(const TokenGrid& q, const TokenGrid& k, const TokenGrid& v,
                               const ViewAdjacency& adjacency, const AttentionOptions& options) {
  return run_plan(cross_view_plan(q.frames(), q.views(), q.positions(), adjacency), q, k, v, options);
}

TokenGrid cross_frame_attention(const TokenGrid& q, const TokenGrid& k, const TokenGrid& v,
                                const AttentionOptions& options) {
  return run_plan(cross_frame_plan(q.frames(), q.views(), q.positions()), q, k, v, options);
}

TokenGrid joint_attention_oracle(const TokenGrid& q, const TokenGrid& k, const TokenGrid& v,
                                 const AttnMask& mask, const AttentionOptions& options) {
  check_inputs(q, k, v, options.heads);
  const std::size_t n = q.tokens();
  const std::size_t width = q.width();
  const std::size_t heads = options.heads;
  const std::size_t head_dim = width / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  const double neg_inf = -std::numeric_limits<double>::infinity();
  const auto& qs = q.values();
  const auto& ks = k.values();
  const auto& vs = v.values();

  TokenGrid out(q.frames(), q.views(), q.positions(), width);
  if (options.weights) {
    options.weights->heads = heads;
    options.weights->tokens = n;
    options.weights->values.assign(heads * n * n, 0.0);
  }
  std::vector<double> logits(n);
  for (std::size_t i = 0; i < n; ++i) {
    bool any = false;
    for (std::size_t j = 0; j < n; ++j) any = any || mask(i, j);
    if (!any) throw NumericError("query " + std::to_string(i) + " has no allowed key");
    for (std::size_t h = 0; h < heads; ++h) {
      double peak = neg_inf;
      for (std::size_t j = 0; j < n; ++j) {
        if (!mask(i, j)) {
          logits[j] = neg_inf;
          continue;
        }
        double s = 0.0;
        for (std::size_t c = h * head_dim; c < (h + 1) * head_dim; ++c) s += qs[i * width + c] * ks[j * width + c];
        logits[j] = s * inv_sqrt;
        peak = std::max(peak, logits[j]);
      }
      double total = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        logits[j] = logits[j] == neg_inf ? 0.0 : std::exp(logits[j] - peak);
        total += logits[j];
      }
      for (std::size_t j = 0; j < n; ++j) {
        const double w = logits[j] / total;
        if (options.weights) options.weights->values[(h * n + i) * n + j] = w;
        if (w == 0.0) continue;
        for (std::size_t c = h * head_dim; c < (h + 1) * head_dim; ++c) {
          out.values()[i * width + c] += w * vs[j * width + c];
        }
      }
    }
  }
  return out;
}

void write_attention_weights(const std::filesystem::path& path, const AttentionWeights& weights) {
  const std::vector<std::uint64_t> dims = {weights.heads, weights.tokens, weights.tokens};
  std::vector<float> values(weights.values.begin(), weights.values.end());
  write_pnc1(path, dims, values);
}

}  // namespace panoforge
