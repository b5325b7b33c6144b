/* Copyright 2026 The embcodec Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "embcodec/layers.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "embcodec/error.hpp"
#include "embcodec/kernels.hpp"

namespace embcodec::nn {
namespace {

constexpr double kNormEps = 1e-6;

void check_width(const Tensor& x, std::size_t width, const char* what) {
  if (x.rank() != 2 || x.cols() != width)
    throw DimensionError(std::string(what) + " expects width " + std::to_string(width) + ", got " +
                         shape_string(x.shape()));
}

}  // namespace

std::size_t ParamLayout::add(std::string name, std::size_t count, int group) {
  segments_.push_back({std::move(name), total_, count, group});
  total_ += count;
  return segments_.back().offset;
}

LinearSpec add_linear(ParamLayout& layout, const std::string& name, std::size_t in, std::size_t out, int group) {
  LinearSpec s;
  s.in = in;
  s.out = out;
  s.w = layout.add(name + ".weight", in * out, group);
  s.b = layout.add(name + ".bias", out, group);
  return s;
}

NormSpec add_norm(ParamLayout& layout, const std::string& name, std::size_t dim, int group) {
  NormSpec s;
  s.dim = dim;
  s.gamma = layout.add(name + ".weight", dim, group);
  s.beta = layout.add(name + ".bias", dim, group);
  return s;
}

BlockSpec add_block(ParamLayout& layout, const std::string& name, std::size_t dim, std::size_t heads,
                    std::size_t mlp_ratio, int group) {
  if (heads == 0 || dim % heads != 0) throw DimensionError("width must be divisible by the head count");
  BlockSpec s;
  s.ln1 = add_norm(layout, name + ".norm1", dim, group);
  s.attn.qkv.in = dim;
  s.attn.qkv.out = 3 * dim;
  s.attn.qkv.has_bias = false;
  s.attn.qkv.w = layout.add(name + ".attn.qkv.weight", 3 * dim * dim, group);
  s.attn.qv_bias = layout.add(name + ".attn.qv.bias", 2 * dim, group);
  s.attn.proj = add_linear(layout, name + ".attn.proj", dim, dim, group);
  s.attn.heads = heads;
  s.ln2 = add_norm(layout, name + ".norm2", dim, group);
  s.mlp.fc1 = add_linear(layout, name + ".mlp.fc1", dim, dim * mlp_ratio, group);
  s.mlp.fc2 = add_linear(layout, name + ".mlp.fc2", dim * mlp_ratio, dim, group);
  return s;
}

void init_linear(std::span<double> p, const LinearSpec& s, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(s.in + s.out));
  for (std::size_t i = 0; i < s.in * s.out; ++i) p[s.w + i] = rng.uniform(-a, a);
  if (s.has_bias) std::fill_n(p.begin() + static_cast<std::ptrdiff_t>(s.b), s.out, 0.0);
}

void init_norm(std::span<double> p, const NormSpec& s) {
  std::fill_n(p.begin() + static_cast<std::ptrdiff_t>(s.gamma), s.dim, 1.0);
  std::fill_n(p.begin() + static_cast<std::ptrdiff_t>(s.beta), s.dim, 0.0);
}

void init_block(std::span<double> p, const BlockSpec& s, Rng& rng) {
  init_norm(p, s.ln1);
  init_linear(p, s.attn.qkv, rng);
  std::fill_n(p.begin() + static_cast<std::ptrdiff_t>(s.attn.qv_bias), 2 * s.attn.proj.in, 0.0);
  init_linear(p, s.attn.proj, rng);
  init_norm(p, s.ln2);
  init_linear(p, s.mlp.fc1, rng);
  init_linear(p, s.mlp.fc2, rng);
}

Tensor linear_forward(std::span<const double> p, const LinearSpec& s, const Tensor& x) {
  check_width(x, s.in, "linear");
  const std::size_t t = x.rows();
  Tensor y = Tensor::matrix(t, s.out);
  kernels::gemm_nt(x.values(), p.subspan(s.w, s.in * s.out), y.values(), t, s.in, s.out);
  if (!s.has_bias) return y;
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t o = 0; o < s.out; ++o) y(i, o) += p[s.b + o];
  return y;
}

Tensor linear_backward(std::span<const double> p, std::span<double> g, const LinearSpec& s, const Tensor& x,
                       const Tensor& dy) {
  const std::size_t t = x.rows();
  kernels::gemm_tn(dy.values(), x.values(), g.subspan(s.w, s.in * s.out), t, s.out, s.in, true);
  if (s.has_bias)
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t o = 0; o < s.out; ++o) g[s.b + o] += dy(i, o);
  Tensor dx = Tensor::matrix(t, s.in);
  kernels::gemm_nn(dy.values(), p.subspan(s.w, s.in * s.out), dx.values(), t, s.out, s.in);
  return dx;
}

Tensor norm_forward(std::span<const double> p, const NormSpec& s, const Tensor& x, NormCache* cache) {
  check_width(x, s.dim, "layer norm");
  const std::size_t t = x.rows(), d = s.dim;
  Tensor y = Tensor::matrix(t, d);
  Tensor xhat = Tensor::matrix(t, d);
  std::vector<double> inv(t);
  for (std::size_t i = 0; i < t; ++i) {
    double mean = 0;
    for (std::size_t j = 0; j < d; ++j) mean += x(i, j);
    mean /= static_cast<double>(d);
    double var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (x(i, j) - mean) * (x(i, j) - mean);
    var /= static_cast<double>(d);
    inv[i] = 1.0 / std::sqrt(var + kNormEps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat(i, j) = (x(i, j) - mean) * inv[i];
      y(i, j) = p[s.gamma + j] * xhat(i, j) + p[s.beta + j];
    }
  }
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv);
  }
  return y;
}

Tensor norm_backward(std::span<const double> p, std::span<double> g, const NormSpec& s, const NormCache& cache,
                     const Tensor& dy) {
  const std::size_t t = dy.rows(), d = s.dim;
  Tensor dx = Tensor::matrix(t, d);
  std::vector<double> dxhat(d);
  for (std::size_t i = 0; i < t; ++i) {
    double sum = 0, dot = 0;
    for (std::size_t j = 0; j < d; ++j) {
      g[s.gamma + j] += dy(i, j) * cache.xhat(i, j);
      g[s.beta + j] += dy(i, j);
      dxhat[j] = dy(i, j) * p[s.gamma + j];
      sum += dxhat[j];
      dot += dxhat[j] * cache.xhat(i, j);
    }
    const double k = cache.inv_std[i] / static_cast<double>(d);
    for (std::size_t j = 0; j < d; ++j)
      dx(i, j) = k * (static_cast<double>(d) * dxhat[j] - sum - cache.xhat(i, j) * dot);
  }
  return dx;
}

Tensor attention_forward(std::span<const double> p, const AttentionSpec& s, const Tensor& x, AttentionCache* cache) {
  const std::size_t t = x.rows(), d = s.proj.in, heads = s.heads, dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor qkv = linear_forward(p, s.qkv, x);
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t k = 0; k < d; ++k) {
      qkv(i, k) += p[s.qv_bias + k];
      qkv(i, 2 * d + k) += p[s.qv_bias + d + k];
    }
  Tensor ctx = Tensor::matrix(t, d);
  std::vector<Tensor> probs;
  probs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t qo = h * dh, ko = d + h * dh, vo = 2 * d + h * dh;
    Tensor a = Tensor::matrix(t, t);
    for (std::size_t i = 0; i < t; ++i) {
      double mx = -INFINITY;
      for (std::size_t j = 0; j < t; ++j) {
        double sc = 0;
        for (std::size_t k = 0; k < dh; ++k) sc += qkv(i, qo + k) * qkv(j, ko + k);
        a(i, j) = sc * scale;
        mx = std::max(mx, a(i, j));
      }
      double z = 0;
      for (std::size_t j = 0; j < t; ++j) {
        a(i, j) = std::exp(a(i, j) - mx);
        z += a(i, j);
      }
      for (std::size_t j = 0; j < t; ++j) a(i, j) /= z;
      for (std::size_t j = 0; j < t; ++j)
        for (std::size_t k = 0; k < dh; ++k) ctx(i, qo + k) += a(i, j) * qkv(j, vo + k);
    }
    probs.push_back(std::move(a));
  }
  Tensor out = linear_forward(p, s.proj, ctx);
  if (cache) {
    cache->x = x;
    cache->qkv = std::move(qkv);
    cache->ctx = std::move(ctx);
    cache->probs = std::move(probs);
  }
  return out;
}

Tensor attention_backward(std::span<const double> p, std::span<double> g, const AttentionSpec& s,
                          const AttentionCache& cache, const Tensor& dy) {
  const std::size_t t = dy.rows(), d = s.proj.in, heads = s.heads, dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const Tensor dctx = linear_backward(p, g, s.proj, cache.ctx, dy);
  const Tensor& qkv = cache.qkv;
  Tensor dqkv = Tensor::matrix(t, 3 * d);
  std::vector<double> dp(t);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t qo = h * dh, ko = d + h * dh, vo = 2 * d + h * dh;
    const Tensor& a = cache.probs[h];
    for (std::size_t i = 0; i < t; ++i) {
      // dP = dO V^T, then through the row softmax.
      double row = 0;
      for (std::size_t j = 0; j < t; ++j) {
        double v = 0;
        for (std::size_t k = 0; k < dh; ++k) v += dctx(i, qo + k) * qkv(j, vo + k);
        dp[j] = v;
        row += v * a(i, j);
      }
      for (std::size_t j = 0; j < t; ++j) {
        const double ds = a(i, j) * (dp[j] - row) * scale;
        for (std::size_t k = 0; k < dh; ++k) {
          dqkv(i, qo + k) += ds * qkv(j, ko + k);
          dqkv(j, ko + k) += ds * qkv(i, qo + k);
          dqkv(j, vo + k) += a(i, j) * dctx(i, qo + k);
        }
      }
    }
  }
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t k = 0; k < d; ++k) {
      g[s.qv_bias + k] += dqkv(i, k);
      g[s.qv_bias + d + k] += dqkv(i, 2 * d + k);
    }
  return linear_backward(p, g, s.qkv, cache.x, dqkv);
}

double gelu(double x) noexcept { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2)); }

double gelu_grad(double x) noexcept {
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2 * std::numbers::pi);
  return 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2)) + x * pdf;
}

Tensor mlp_forward(std::span<const double> p, const MlpSpec& s, const Tensor& x, MlpCache* cache) {
  Tensor pre = linear_forward(p, s.fc1, x);
  Tensor act = pre;
  for (double& v : act.storage()) v = gelu(v);
  Tensor out = linear_forward(p, s.fc2, act);
  if (cache) {
    cache->x = x;
    cache->pre = std::move(pre);
    cache->act = std::move(act);
  }
  return out;
}

Tensor mlp_backward(std::span<const double> p, std::span<double> g, const MlpSpec& s, const MlpCache& cache,
                    const Tensor& dy) {
  Tensor dact = linear_backward(p, g, s.fc2, cache.act, dy);
  for (std::size_t i = 0; i < dact.size(); ++i) dact[i] *= gelu_grad(cache.pre[i]);
  return linear_backward(p, g, s.fc1, cache.x, dact);
}

Tensor block_forward(std::span<const double> p, const BlockSpec& s, const Tensor& x, BlockCache* cache) {
  Tensor h = attention_forward(p, s.attn, norm_forward(p, s.ln1, x, cache ? &cache->n1 : nullptr),
                               cache ? &cache->attn : nullptr);
  for (std::size_t i = 0; i < h.size(); ++i) h[i] += x[i];
  Tensor out = mlp_forward(p, s.mlp, norm_forward(p, s.ln2, h, cache ? &cache->n2 : nullptr),
                           cache ? &cache->mlp : nullptr);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += h[i];
  return out;
}

Tensor block_backward(std::span<const double> p, std::span<double> g, const BlockSpec& s, const BlockCache& cache,
                      const Tensor& dy) {
  Tensor dh = norm_backward(p, g, s.ln2, cache.n2, mlp_backward(p, g, s.mlp, cache.mlp, dy));
  for (std::size_t i = 0; i < dh.size(); ++i) dh[i] += dy[i];
  Tensor dx = norm_backward(p, g, s.ln1, cache.n1, attention_backward(p, g, s.attn, cache.attn, dh));
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dh[i];
  return dx;
}

Tensor sincos_position_table(std::size_t dim, std::size_t grid) {
  if (dim % 4 != 0) throw DimensionError("position table width must be a multiple of 4");
  const std::size_t quarter = dim / 4;
  Tensor table = Tensor::matrix(grid * grid + 1, dim);
  for (std::size_t r = 0; r < grid; ++r)
    for (std::size_t c = 0; c < grid; ++c) {
      const std::size_t row = 1 + r * grid + c;
      // First half encodes the column, second half the row.
      const double coord[2] = {static_cast<double>(c), static_cast<double>(r)};
      for (std::size_t half = 0; half < 2; ++half)
        for (std::size_t i = 0; i < quarter; ++i) {
          const double omega = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(quarter));
          table(row, half * 2 * quarter + i) = std::sin(coord[half] * omega);
          table(row, half * 2 * quarter + quarter + i) = std::cos(coord[half] * omega);
        }
    }
  return table;
}

}  // namespace embcodec::nn
