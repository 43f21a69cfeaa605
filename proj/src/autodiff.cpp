// SPDX-License-Identifier: Apache-2.0
#include "panoforge/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "panoforge/error.hpp"
#include "panoforge/parallel.hpp"

namespace panoforge::ad {
namespace {

struct ConvGeom {
  std::size_t n, ci, h, w, co, k, ho, wo, stride, pad;
};

// Output columns ox whose input column ox*stride + kx - pad lies in [0, w).
void column_range(const ConvGeom& g, std::size_t kx, std::size_t& lo, std::size_t& hi) {
  const long s = static_cast<long>(g.stride);
  const long off = static_cast<long>(kx) - static_cast<long>(g.pad);
  long first = off >= 0 ? 0 : (-off + s - 1) / s;
  long last = (static_cast<long>(g.w) - 1 - off);
  last = last < 0 ? -1 : last / s;
  last = std::min(last, static_cast<long>(g.wo) - 1);
  if (first > last) {
    lo = 1;
    hi = 0;
    return;
  }
  lo = static_cast<std::size_t>(first);
  hi = static_cast<std::size_t>(last);
}

bool input_row(const ConvGeom& g, std::size_t oy, std::size_t ky, std::size_t& iy) {
  const long r = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
  if (r < 0 || r >= static_cast<long>(g.h)) return false;
  iy = static_cast<std::size_t>(r);
  return true;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(t.shape()));
  }
}

}  // namespace

Var Tape::push(Tensor value, std::initializer_list<Var> inputs) {
  Node node;
  node.value = std::move(value);
  if (record_) {
    for (Var in : inputs) node.needs_grad = node.needs_grad || needs(in);
  }
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

Tensor& Tape::grad_of(Var v) {
  Node& node = nodes_[v];
  if (node.grad.empty()) node.grad = Tensor(node.value.shape());
  return node.grad;
}

const Tensor* Tape::grad(Var v) const {
  const Node& node = nodes_.at(v);
  return node.grad.empty() ? nullptr : &node.grad;
}

Var Tape::constant(Tensor value) { return push(std::move(value), {}); }

Var Tape::parameter(const std::string& name, const Tensor& value) {
  if (params_.count(name)) throw ConfigError("parameter bound twice: " + name);
  Var v = push(value, {});
  nodes_[v].needs_grad = record_;
  params_[name] = v;
  return v;
}

void Tape::backward(Var out) {
  if (!record_) throw ConfigError("backward on a tape that does not record");
  if (nodes_.at(out).value.size() != 1) throw ShapeError("backward needs a scalar output");
  if (!nodes_[out].needs_grad) return;
  grad_of(out)[0] = 1.0;
  for (Var i = out + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.needs_grad && node.backward && !node.grad.empty()) node.backward();
  }
}

std::map<std::string, Tensor> Tape::parameter_gradients() const {
  std::map<std::string, Tensor> out;
  for (const auto& [name, v] : params_) {
    const Node& node = nodes_[v];
    out[name] = node.grad.empty() ? Tensor(node.value.shape()) : node.grad;
  }
  return out;
}

Var Tape::add(Var a, Var b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  if (!x.same_shape(y)) throw ShapeError("add: " + shape_string(x.shape()) + " vs " + shape_string(y.shape()));
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
  Var r = push(std::move(out), {a, b});
  if (nodes_[r].needs_grad) {
    nodes_[r].backward = [this, a, b, r] {
      const Tensor& g = nodes_[r].grad;
      for (Var in : {a, b}) {
        if (!needs(in)) continue;
        Tensor& d = grad_of(in);
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
      }
    };
  }
  return r;
}

Var Tape::silu(Var x) {
  const Tensor& in = value(x);
  Tensor out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] * sigmoid(in[i]);
  Var r = push(std::move(out), {x});
  if (nodes_[r].needs_grad) {
    nodes_[r].backward = [this, x, r] {
      const Tensor& in = nodes_[x].value;
      const Tensor& g = nodes_[r].grad;
      Tensor& d = grad_of(x);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double s = sigmoid(in[i]);
        d[i] += g[i] * s * (1.0 + in[i] * (1.0 - s));
      }
    };
  }
  return r;
}

Var Tape::conv2d(Var x, Var weight, Var bias, std::size_t stride, std::size_t padding) {
  const Tensor& in = value(x);
  const Tensor& w = value(weight);
  require_rank(in, 4, "conv2d input");
  require_rank(w, 4, "conv2d weight");
  if (w.dim(1) != in.dim(1) || w.dim(2) != w.dim(3)) {
    throw ShapeError("conv2d: weight " + shape_string(w.shape()) + " for input " + shape_string(in.shape()));
  }
  if (stride == 0) throw ConfigError("conv2d: stride must be positive");
  ConvGeom g{in.dim(0), in.dim(1), in.dim(2), in.dim(3), w.dim(0), w.dim(2), 0, 0, stride, padding};
  if (g.h + 2 * g.pad < g.k || g.w + 2 * g.pad < g.k) throw ShapeError("conv2d: kernel larger than input");
  g.ho = (g.h + 2 * g.pad - g.k) / g.stride + 1;
  g.wo = (g.w + 2 * g.pad - g.k) / g.stride + 1;
  if (bias != kNone && value(bias).size() != g.co) throw ShapeError("conv2d: bias size");

  Tensor out({g.n, g.co, g.ho, g.wo});
  const double* xin = in.data();
  const double* wd = w.data();
  const double* bd = bias == kNone ? nullptr : value(bias).data();
  double* od = out.data();
  parallel_for(g.n * g.co, [&](std::size_t task) {
    const std::size_t n = task / g.co;
    const std::size_t co = task % g.co;
    double* plane = od + task * g.ho * g.wo;
    std::fill(plane, plane + g.ho * g.wo, bd ? bd[co] : 0.0);
    for (std::size_t ci = 0; ci < g.ci; ++ci) {
      const double* src = xin + (n * g.ci + ci) * g.h * g.w;
      for (std::size_t ky = 0; ky < g.k; ++ky) {
        for (std::size_t kx = 0; kx < g.k; ++kx) {
          const double wv = wd[((co * g.ci + ci) * g.k + ky) * g.k + kx];
          std::size_t lo, hi;
          column_range(g, kx, lo, hi);
          if (lo > hi) continue;
          for (std::size_t oy = 0; oy < g.ho; ++oy) {
            std::size_t iy;
            if (!input_row(g, oy, ky, iy)) continue;
            const double* srow = src + iy * g.w;
            double* orow = plane + oy * g.wo;
            for (std::size_t ox = lo; ox <= hi; ++ox) orow[ox] += wv * srow[ox * g.stride + kx - g.pad];
          }
        }
      }
    }
  });

  Var r = push(std::move(out), {x, weight, bias});
  if (nodes_[r].needs_grad) {
    nodes_[r].backward = [this, x, weight, bias, r, g] {
      const double* dy = nodes_[r].grad.data();
      const double* xin = nodes_[x].value.data();
      const double* wd = nodes_[weight].value.data();
      if (needs(x)) {
        double* dx = grad_of(x).data();
        parallel_for(g.n, [&](std::size_t n) {
          for (std::size_t co = 0; co < g.co; ++co) {
            const double* gplane = dy + (n * g.co + co) * g.ho * g.wo;
            for (std::size_t ci = 0; ci < g.ci; ++ci) {
              double* dplane = dx + (n * g.ci + ci) * g.h * g.w;
              for (std::size_t ky = 0; ky < g.k; ++ky) {
                for (std::size_t kx = 0; kx < g.k; ++kx) {
                  const double wv = wd[((co * g.ci + ci) * g.k + ky) * g.k + kx];
                  std::size_t lo, hi;
                  column_range(g, kx, lo, hi);
                  if (lo > hi) continue;
                  for (std::size_t oy = 0; oy < g.ho; ++oy) {
                    std::size_t iy;
                    if (!input_row(g, oy, ky, iy)) continue;
                    double* drow = dplane + iy * g.w;
                    const double* grow = gplane + oy * g.wo;
                    for (std::size_t ox = lo; ox <= hi; ++ox) drow[ox * g.stride + kx - g.pad] += wv * grow[ox];
                  }
                }
              }
            }
          }
        });
      }
      if (needs(weight)) {
        double* dw = grad_of(weight).data();
        parallel_for(g.co, [&](std::size_t co) {
          for (std::size_t ci = 0; ci < g.ci; ++ci) {
            for (std::size_t ky = 0; ky < g.k; ++ky) {
              for (std::size_t kx = 0; kx < g.k; ++kx) {
                std::size_t lo, hi;
                column_range(g, kx, lo, hi);
                if (lo > hi) continue;
                double acc = 0.0;
                for (std::size_t n = 0; n < g.n; ++n) {
                  const double* gplane = dy + (n * g.co + co) * g.ho * g.wo;
                  const double* src = xin + (n * g.ci + ci) * g.h * g.w;
                  for (std::size_t oy = 0; oy < g.ho; ++oy) {
                    std::size_t iy;
                    if (!input_row(g, oy, ky, iy)) continue;
                    const double* srow = src + iy * g.w;
                    const double* grow = gplane + oy * g.wo;
                    for (std::size_t ox = lo; ox <= hi; ++ox) acc += grow[ox] * srow[ox * g.stride + kx - g.pad];
                  }
                }
                dw[((co * g.ci + ci) * g.k + ky) * g.k + kx] += acc;
              }
            }
          }
        });
      }
      if (bias != kNone && needs(bias)) {
        Tensor& db = grad_of(bias);
        for (std::size_t co = 0; co < g.co; ++co) {
          double acc = 0.0;
          for (std::size_t n = 0; n < g.n; ++n) {
            const double* gplane = dy + (n * g.co + co) * g.ho * g.wo;
            for (std::size_t i = 0; i < g.ho * g.wo; ++i) acc += gplane[i];
          }
          db[co] += acc;
        }
      }
    };
  }
  return r;
}

Var Tape::group_norm(Var x, Var gamma, Var beta, std::size_t groups, double eps) {
  const Tensor& in = value(x);
  require_rank(in, 4, "group_norm input");
  const std::size_t n = in.dim(0), c = in.dim(1), plane = in.dim(2) * in.dim(3);
  if (groups == 0 || c % groups != 0) throw ShapeError("group_norm: channels not divisible by groups");
  if (value(gamma).size() != c || value(beta).size() != c) throw ShapeError("group_norm: affine size");
  const std::size_t per = c / groups;
  const std::size_t count = per * plane;

  auto xhat = std::make_shared<Tensor>(in.shape());
  auto inv_std = std::make_shared<std::vector<double>>(n * groups);
  Tensor out(in.shape());
  const double* gd = value(gamma).data();
  const double* bd = value(beta).data();
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t gi = 0; gi < groups; ++gi) {
      const std::size_t base = (s * c + gi * per) * plane;
      double mean = 0.0;
      for (std::size_t i = 0; i < count; ++i) mean += in[base + i];
      mean /= static_cast<double>(count);
      double var = 0.0;
      for (std::size_t i = 0; i < count; ++i) var += (in[base + i] - mean) * (in[base + i] - mean);
      var /= static_cast<double>(count);
      const double istd = 1.0 / std::sqrt(var + eps);
      (*inv_std)[s * groups + gi] = istd;
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t ch = gi * per + i / plane;
        const double h = (in[base + i] - mean) * istd;
        (*xhat)[base + i] = h;
        out[base + i] = h * gd[ch] + bd[ch];
      }
    }
  }
  Var r = push(std::move(out), {x, gamma, beta});
  if (nodes_[r].needs_grad) {
    nodes_[r].backward = [this, x, gamma, beta, r, xhat, inv_std, n, c, plane, groups, per, count] {
      const Tensor& g = nodes_[r].grad;
      const double* gd = nodes_[gamma].value.data();
      if (needs(gamma) || needs(beta)) {
        std::vector<double> dgamma(c, 0.0), dbeta(c, 0.0);
        for (std::size_t s = 0; s < n; ++s) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t base = (s * c + ch) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              dgamma[ch] += g[base + i] * (*xhat)[base + i];
              dbeta[ch] += g[base + i];
            }
          }
        }
        if (needs(gamma)) {
          Tensor& d = grad_of(gamma);
          for (std::size_t ch = 0; ch < c; ++ch) d[ch] += dgamma[ch];
        }
        if (needs(beta)) {
          Tensor& d = grad_of(beta);
          for (std::size_t ch = 0; ch < c; ++ch) d[ch] += dbeta[ch];
        }
      }
      if (!needs(x)) return;
      Tensor& dx = grad_of(x);
      const double m = static_cast<double>(count);
      for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t gi = 0; gi < groups; ++gi) {
          const std::size_t base = (s * c + gi * per) * plane;
          double sum_d = 0.0, sum_dx = 0.0;
          for (std::size_t i = 0; i < count; ++i) {
            const double dh = g[base + i] * gd[gi * per + i / plane];
            sum_d += dh;
            sum_dx += dh * (*xhat)[base + i];
          }
          const double istd = (*inv_std)[s * groups + gi];
          for (std::size_t i = 0; i < count; ++i) {
            const double dh = g[base + i] * gd[gi * per + i / plane];
            dx[base + i] += istd / m * (m * dh - sum_d - (*xhat)[base + i] * sum_dx);
          }
        }
      }
    };
  }
  return r;
}

Var Tape::modulate(Var x, Var scale_shift) {
  const Tensor& in = value(x);
  const Tensor& ss = value(scale_shift);
  require_rank(in, 4, "modulate input");
  const std::size_t n = in.dim(0), c = in.dim(1), plane = in.dim(2) * in.dim(3);
  if (ss.size() != 2 * c) throw ShapeError("modulate: scale/shift size");
  Tensor out(in.shape());
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (s * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) out[base + i] = in[base + i] * (1.0 + ss[ch]) + ss[c + ch];
    }
  }
  Var r = push(std::move(out), {x, scale_shift});
  if (nodes_[r].needs_grad) {
    nodes_[r].backward = [this, x, scale_shift, r, n, c, plane] {
      const Tensor& g = nodes_[r].grad;
      const Tensor& in = nodes_[x].value;
      const Tensor& ss = nodes_[scale_shift].value;
      if (needs(x)) {
        Tensor& dx = grad_of(x);
        for (std::size_t s = 0; s < n; ++s) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t base = (s * c + ch) * plane;
            for (std::size_t i = 0; i < plane; ++i) dx[base + i] += g[base + i] * (1.0 + ss[ch]);
          }
        }
      }
      if (needs(scale_shift)) {
        Tensor& dss = grad_of(scale_shift);
        for (std::size_t ch = 0; ch < c; ++ch) {
          double ds = 0.0, db = 0.0;
          for (std::size_t s = 0; s < n; ++s) {
            const std::size_t base = (s * c + ch) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              ds += g[base + i] * in[base + i];
              db += g[base + i];
            }
          }
          dss[ch] += ds;
          dss[c + ch] += db;
        }
      }
    };
  }
  return r;
}

Var Tape::linear(Var x, Var weight, Var bias) {
  const Tensor& in = value(x);
  const Tensor& w = value(weight);
  require_rank(w, 2, "linear weight");
  const std::size_t out_dim = w.dim(0), in_dim = w.dim(1);
  if (in.size() != in_dim) throw ShapeError("linear: input size " + std::to_string(in.size()));
  if (bias != kNone && value(bias).size() != out_dim) throw ShapeError("linear: bias size");
  Tensor out({out_dim});
  for (std::size_t o = 0; o < out_dim; ++o) {
    double acc = bias == kNone ? 0.0 : value(bias)[o];
    for (std::size_t i = 0; i < in_dim; ++i) acc += w[o * in_dim + i] * in[i];
    out[o] = acc;
  }
  Var r = push(std::move(out), {x, weight, bias});
  if (nodes_[r].needs_grad) {
    nodes_[r].backward = [this, x, weight, bias, r, out_dim, in_dim] {
      const Tensor& g = nodes_[r].grad;
      const Tensor& in = nodes_[x].value;
      const Tensor& w = nodes_[weight].value;
      if (needs(x)) {
        Tensor& dx = grad_of(x);
        for (std::size_t o = 0; o < out_dim; ++o)
          for (std::size_t i = 0; i < in_dim; ++i) dx[i] += g[o] * w[o * in_dim + i];
      }
      if (needs(weight)) {
        Tensor& dw = grad_of(weight);
        for (std::size_t o = 0; o < out_dim; ++o)
          for (std::size_t i = 0; i < in_dim; ++i) dw[o * in_dim + i] += g[o] * in[i];
      }
      if (bias != kNone && needs(bias)) {
        Tensor& db = grad_of(bias);
        for (std::size_t o = 0; o < out_dim; ++o) db[o] += g[o];
      }
    };
  }
  return r;
}

Var Tape::to_tokens(Var x) {
  const Tensor& in = value(x);
  require_rank(in, 4, "to_tokens input");
  const std::size_t n = in.dim(0), c = in.dim(1), plane = in.dim(2) * in.dim(3);
  Tensor out({n * plane, c});
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < plane; ++i) out[(s * plane + i) * c + ch] = in[(s * c + ch) * plane + i];
  Var r = push(std::move(out), {x});
  if (nodes_[r].needs_grad) {
    nodes_[r].backward = [this, x, r, n, c, plane] {
      const Tensor& g = nodes_[r].grad;
      Tensor& dx = grad_of(x);
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t i = 0; i < plane; ++i) dx[(s * c + ch) * plane + i] += g[(s * plane + i) * c + ch];
    };
  }
  return r;
}

Var Tape::from_tokens(Var tokens, std::size_t height, std::size_t width) {
  const Tensor& in = value(tokens);
  require_rank(in, 2, "from_tokens input");
  const std::size_t plane = height * width;
  if (plane == 0 || in.dim(0) % plane != 0) throw ShapeError("from_tokens: token count vs plane");
  const std::size_t n = in.dim(0) / plane, c = in.dim(1);
  Tensor out({n, c, height, width});
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < plane; ++i) out[(s * c + ch) * plane + i] = in[(s * plane + i) * c + ch];
  Var r = push(std::move(out), {tokens});
  if (nodes_[r].needs_grad) {
    nodes_[r].backward = [this, tokens, r, n, c, plane] {
      const Tensor& g = nodes_[r].grad;
      Tensor& dt = grad_of(tokens);
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t i = 0; i < plane; ++i) dt[(s * plane + i) * c + ch] += g[(s * c + ch) * plane + i];
    };
  }
  return r;
}

Var Tape::token_linear(Var tokens, Var weight, Var bias) {
  const Tensor& in = value(tokens);
  const Tensor& w = value(weight);
  require_rank(in, 2, "token_linear input");
  require_rank(w, 2, "token_linear weight");
  const std::size_t m = in.dim(0), ci = in.dim(1), co = w.dim(0);
  if (w.dim(1) != ci) throw ShapeError("token_linear: weight " + shape_string(w.shape()));
  if (bias != kNone && value(bias).size() != co) throw ShapeError("token_linear: bias size");
  Tensor out({m, co});
  const double* bd = bias == kNone ? nullptr : value(bias).data();
  parallel_for(m, [&](std::size_t row) {
    const double* x = in.data() + row * ci;
    for (std::size_t o = 0; o < co; ++o) {
      double acc = bd ? bd[o] : 0.0;
      const double* wr = w.data() + o * ci;
      for (std::size_t i = 0; i < ci; ++i) acc += wr[i] * x[i];
      out[row * co + o] = acc;
    }
  });
  Var r = push(std::move(out), {tokens, weight, bias});
  if (nodes_[r].needs_grad) {
    nodes_[r].backward = [this, tokens, weight, bias, r, m, ci, co] {
      const Tensor& g = nodes_[r].grad;
      const Tensor& in = nodes_[tokens].value;
      const Tensor& w = nodes_[weight].value;
      if (needs(tokens)) {
        Tensor& dx = grad_of(tokens);
        for (std::size_t row = 0; row < m; ++row)
          for (std::size_t o = 0; o < co; ++o) {
            const double gv = g[row * co + o];
            for (std::size_t i = 0; i < ci; ++i) dx[row * ci + i] += gv * w[o * ci + i];
          }
      }
      if (needs(weight)) {
        Tensor& dw = grad_of(weight);
        for (std::size_t o = 0; o < co; ++o)
          for (std::size_t i = 0; i < ci; ++i) {
            double acc = 0.0;
            for (std::size_t row = 0; row < m; ++row) acc += g[row * co + o] * in[row * ci + i];
            dw[o * ci + i] += acc;
          }
      }
      if (bias != kNone && needs(bias)) {
        Tensor& db = grad_of(bias);
        for (std::size_t o = 0; o < co; ++o) {
          double acc = 0.0;
          for (std::size_t row = 0; row < m; ++row) acc += g[row * co + o];
          db[o] += acc;
        }
      }
    };
  }
  return r;
}

Var Tape::attention(Var q, Var k, Var v, std::shared_ptr<const AttentionPlan> plan,
                    std::size_t heads) {
  const Tensor& qv = value(q);
  require_rank(qv, 2, "attention q");
  if (!qv.same_shape(value(k)) || !qv.same_shape(value(v))) throw ShapeError("attention: q, k, v shapes differ");
  if (qv.dim(0) != plan->tokens) throw ShapeError("attention: plan token count");
  const std::size_t width = qv.dim(1);
  if (heads == 0 || width % heads != 0) throw ShapeError("attention: width not divisible by heads");
  Tensor out(qv.shape());
  auto probs = std::make_shared<AttentionProbs>();
  attention_forward(*plan, width, heads, qv.data(), value(k).data(), value(v).data(), out.data(),
                    record_ ? probs.get() : nullptr);
  Var r = push(std::move(out), {q, k, v});
  if (nodes_[r].needs_grad) {
    nodes_[r].backward = [this, q, k, v, r, plan, heads, width, probs] {
      Tensor dq(nodes_[q].value.shape()), dk(dq.shape()), dv(dq.shape());
      attention_backward(*plan, width, heads, nodes_[q].value.data(), nodes_[k].value.data(),
                         nodes_[v].value.data(), *probs, nodes_[r].grad.data(), dq.data(), dk.data(),
                         dv.data());
      const std::pair<Var, const Tensor*> parts[] = {{q, &dq}, {k, &dk}, {v, &dv}};
      for (const auto& [in, d] : parts) {
        if (!needs(in)) continue;
        Tensor& acc = grad_of(in);
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += (*d)[i];
      }
    };
  }
  return r;
}

Var Tape::upsample_nearest(Var x, std::size_t factor) {
  const Tensor& in = value(x);
  require_rank(in, 4, "upsample input");
  if (factor == 0) throw ConfigError("upsample: factor must be positive");
  const std::size_t nc = in.dim(0) * in.dim(1), h = in.dim(2), w = in.dim(3);
  const std::size_t ho = h * factor, wo = w * factor;
  Tensor out({in.dim(0), in.dim(1), ho, wo});
  for (std::size_t p = 0; p < nc; ++p)
    for (std::size_t y = 0; y < ho; ++y)
      for (std::size_t xo = 0; xo < wo; ++xo) out[(p * ho + y) * wo + xo] = in[(p * h + y / factor) * w + xo / factor];
  Var r = push(std::move(out), {x});
  if (nodes_[r].needs_grad) {
    nodes_[r].backward = [this, x, r, nc, h, w, ho, wo, factor] {
      const Tensor& g = nodes_[r].grad;
      Tensor& dx = grad_of(x);
      for (std::size_t p = 0; p < nc; ++p)
        for (std::size_t y = 0; y < ho; ++y)
          for (std::size_t xo = 0; xo < wo; ++xo) dx[(p * h + y / factor) * w + xo / factor] += g[(p * ho + y) * wo + xo];
    };
  }
  return r;
}

Var Tape::mse(Var pred, Var target) {
  const Tensor& p = value(pred);
  const Tensor& t = value(target);
  if (p.size() != t.size() || p.empty()) throw ShapeError("mse: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += (p[i] - t[i]) * (p[i] - t[i]);
  Tensor out({1}, acc / static_cast<double>(p.size()));
  Var r = push(std::move(out), {pred, target});
  if (nodes_[r].needs_grad) {
    nodes_[r].backward = [this, pred, target, r] {
      const double g = nodes_[r].grad[0];
      const Tensor& p = nodes_[pred].value;
      const Tensor& t = nodes_[target].value;
      const double scale = 2.0 * g / static_cast<double>(p.size());
      if (needs(pred)) {
        Tensor& d = grad_of(pred);
        for (std::size_t i = 0; i < p.size(); ++i) d[i] += scale * (p[i] - t[i]);
      }
      if (needs(target)) {
        Tensor& d = grad_of(target);
        for (std::size_t i = 0; i < p.size(); ++i) d[i] -= scale * (p[i] - t[i]);
      }
    };
  }
  return r;
}

}  // namespace panoforge::ad
