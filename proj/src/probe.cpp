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

#include "embcodec/probe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <fmt/format.h>

#include "embcodec/error.hpp"
#include "embcodec/random.hpp"

namespace embcodec {

Pooling parse_pooling(const std::string& name) {
  if (name == "mean") return Pooling::kMean;
  if (name == "attention" || name == "attention-pool") return Pooling::kAttention;
  throw UsageError(fmt::format("unknown pooling '{}' (expected mean or attention)", name));
}

const char* pooling_name(Pooling p) noexcept { return p == Pooling::kMean ? "mean" : "attention"; }

namespace {

struct Standardizer {
  std::vector<double> mean, inv_sd;
  void apply(std::span<double> v) const {
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = (v[i] - mean[i]) * inv_sd[i];
  }
};

// Statistics over a list of d-vectors stored back to back.
Standardizer fit_standardizer(const std::vector<double>& rows, std::size_t d) {
  const std::size_t m = rows.size() / d;
  Standardizer s;
  s.mean.assign(d, 0.0);
  s.inv_sd.assign(d, 1.0);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t k = 0; k < d; ++k) s.mean[k] += rows[r * d + k];
  for (auto& v : s.mean) v /= static_cast<double>(m);
  std::vector<double> var(d, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t k = 0; k < d; ++k) {
      const double c = rows[r * d + k] - s.mean[k];
      var[k] += c * c;
    }
  }
  for (std::size_t k = 0; k < d; ++k) {
    const double sd = std::sqrt(var[k] / static_cast<double>(m));
    // Constant features carry nothing; leave them centred at zero.
    s.inv_sd[k] = sd > 1e-12 ? 1.0 / sd : 1.0;
  }
  return s;
}

// Standardized tokens (without the class token) of one sample: (n-1) x d.
std::vector<double> tokens_of(const Tensor& t) {
  const std::size_t d = t.rows(), n = t.cols();
  std::vector<double> out((n - 1) * d);
  for (std::size_t j = 1; j < n; ++j)
    for (std::size_t k = 0; k < d; ++k) out[(j - 1) * d + k] = t(k, j);
  return out;
}

std::vector<double> mean_pool(const Tensor& t) {
  const std::size_t d = t.rows(), n = t.cols();
  std::vector<double> f(d, 0.0);
  for (std::size_t k = 0; k < d; ++k) {
    double s = 0.0;
    for (std::size_t j = 1; j < n; ++j) s += t(k, j);
    f[k] = s / static_cast<double>(n - 1);
  }
  return f;
}

class Head {
 public:
  Head(std::size_t d, int classes, bool attention)
      : d_(d), k_(static_cast<std::size_t>(classes)), attention_(attention),
        theta_(k_ * d_ + k_ + (attention ? d_ : 0), 0.0) {}

  std::size_t size() const { return theta_.size(); }
  std::vector<double>& theta() { return theta_; }

  // Pools sample tokens (m x d) into `pooled`, filling attention weights.
  void pool(const std::vector<double>& toks, std::vector<double>& pooled, std::vector<double>& attn) const {
    const std::size_t m = toks.size() / d_;
    pooled.assign(d_, 0.0);
    if (!attention_) {
      // Mean-pool features are precomputed; toks is already the d-vector.
      std::copy(toks.begin(), toks.end(), pooled.begin());
      return;
    }
    const double* q = theta_.data() + k_ * d_ + k_;
    const double scale = 1.0 / std::sqrt(static_cast<double>(d_));
    attn.assign(m, 0.0);
    double mx = -INFINITY;
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < d_; ++c) s += q[c] * toks[j * d_ + c];
      attn[j] = s * scale;
      mx = std::max(mx, attn[j]);
    }
    double z = 0.0;
    for (auto& a : attn) z += (a = std::exp(a - mx));
    for (auto& a : attn) a /= z;
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t c = 0; c < d_; ++c) pooled[c] += attn[j] * toks[j * d_ + c];
  }

  void logits(const std::vector<double>& pooled, std::vector<double>& out) const {
    out.assign(k_, 0.0);
    for (std::size_t i = 0; i < k_; ++i) {
      double s = theta_[k_ * d_ + i];
      for (std::size_t c = 0; c < d_; ++c) s += theta_[i * d_ + c] * pooled[c];
      out[i] = s;
    }
  }

  int predict(const std::vector<double>& toks) const {
    std::vector<double> pooled, attn, lg;
    pool(toks, pooled, attn);
    logits(pooled, lg);
    return static_cast<int>(std::max_element(lg.begin(), lg.end()) - lg.begin());
  }

  // Adds the cross-entropy gradient of one sample, scaled by w, to grad.
  void accumulate(const std::vector<double>& toks, int label, double w, std::vector<double>& grad) const {
    std::vector<double> pooled, attn, p;
    pool(toks, pooled, attn);
    logits(pooled, p);
    const double mx = *std::max_element(p.begin(), p.end());
    double z = 0.0;
    for (auto& v : p) z += (v = std::exp(v - mx));
    for (auto& v : p) v /= z;
    p[static_cast<std::size_t>(label)] -= 1.0;
    for (std::size_t i = 0; i < k_; ++i) {
      for (std::size_t c = 0; c < d_; ++c) grad[i * d_ + c] += w * p[i] * pooled[c];
      grad[k_ * d_ + i] += w * p[i];
    }
    if (!attention_) return;
    std::vector<double> dpooled(d_, 0.0);
    for (std::size_t i = 0; i < k_; ++i)
      for (std::size_t c = 0; c < d_; ++c) dpooled[c] += theta_[i * d_ + c] * p[i];
    const std::size_t m = attn.size();
    std::vector<double> da(m, 0.0);
    double dot = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t c = 0; c < d_; ++c) da[j] += dpooled[c] * toks[j * d_ + c];
      dot += attn[j] * da[j];
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(d_));
    double* gq = grad.data() + k_ * d_ + k_;
    for (std::size_t j = 0; j < m; ++j) {
      const double ds = attn[j] * (da[j] - dot) * scale;
      for (std::size_t c = 0; c < d_; ++c) gq[c] += w * ds * toks[j * d_ + c];
    }
  }

  std::size_t weight_count() const { return k_ * d_; }

 private:
  std::size_t d_, k_;
  bool attention_;
  std::vector<double> theta_;
};

void check_split(std::span<const Tensor> tokens, std::span<const int> labels, int num_classes, const char* name,
                 std::size_t& d, std::size_t& n) {
  if (tokens.size() != labels.size()) {
    throw DimensionError(fmt::format("{} split: {} samples but {} labels", name, tokens.size(), labels.size()));
  }
  if (tokens.empty()) throw DimensionError(fmt::format("{} split is empty", name));
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const Tensor& t = tokens[i];
    if (t.rank() != 2) throw DimensionError(fmt::format("{} sample {} is not a d x n matrix", name, i));
    if (d == 0) {
      d = t.rows();
      n = t.cols();
      if (n < 2) throw DimensionError("probe needs at least one token besides the class token");
    } else if (t.rows() != d || t.cols() != n) {
      throw DimensionError(fmt::format("{} sample {} has shape {}x{}, expected {}x{}", name, i, t.rows(), t.cols(),
                                       d, n));
    }
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw RangeError(fmt::format("{} label {} outside [0, {})", name, labels[i], num_classes));
    }
  }
}

}  // namespace

ProbeResult train_probe(std::span<const Tensor> train_tokens, std::span<const int> train_labels,
                        std::span<const Tensor> eval_tokens, std::span<const int> eval_labels, int num_classes,
                        const ProbeConfig& config) {
  if (num_classes < 2) throw DegenerateInputError("probe needs at least two classes");
  std::size_t d = 0, n = 0;
  check_split(train_tokens, train_labels, num_classes, "train", d, n);
  check_split(eval_tokens, eval_labels, num_classes, "eval", d, n);
  if (std::set<int>(train_labels.begin(), train_labels.end()).size() < 2) {
    throw DegenerateInputError("train split holds a single class");
  }
  if (!(config.lr > 0.0) || config.epochs == 0) throw DomainError("probe needs lr > 0 and epochs >= 1");

  const bool attention = config.pooling == Pooling::kAttention;
  auto features = [&](std::span<const Tensor> split) {
    std::vector<std::vector<double>> out(split.size());
    for (std::size_t i = 0; i < split.size(); ++i) out[i] = attention ? tokens_of(split[i]) : mean_pool(split[i]);
    return out;
  };
  auto train = features(train_tokens);
  auto eval = features(eval_tokens);

  std::vector<double> all;
  for (const auto& f : train) all.insert(all.end(), f.begin(), f.end());
  const Standardizer st = fit_standardizer(all, d);
  for (auto* split : {&train, &eval}) {
    for (auto& f : *split) {
      for (std::size_t off = 0; off < f.size(); off += d) st.apply(std::span<double>(f).subspan(off, d));
    }
  }

  Head head(d, num_classes, attention);
  auto& theta = head.theta();
  std::vector<double> m1(theta.size(), 0.0), m2(theta.size(), 0.0), grad(theta.size());
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const std::size_t count = train.size();
  const std::size_t batch = config.batch_size == 0 ? count : std::min(config.batch_size, count);
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(config.seed, 0x9f0be));
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    if (batch < count) {
      for (std::size_t i = count - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
    }
    for (std::size_t start = 0; start < count; start += batch) {
      const std::size_t stop = std::min(count, start + batch);
      std::fill(grad.begin(), grad.end(), 0.0);
      const double w = 1.0 / static_cast<double>(stop - start);
      for (std::size_t i = start; i < stop; ++i) head.accumulate(train[order[i]], train_labels[order[i]], w, grad);
      for (std::size_t i = 0; i < head.weight_count(); ++i) grad[i] += config.weight_decay * theta[i];
      ++step;
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
      for (std::size_t i = 0; i < theta.size(); ++i) {
        m1[i] = b1 * m1[i] + (1.0 - b1) * grad[i];
        m2[i] = b2 * m2[i] + (1.0 - b2) * grad[i] * grad[i];
        theta[i] -= config.lr * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + eps);
      }
    }
  }
  for (double v : theta) {
    if (!std::isfinite(v)) throw TrainingError(step, "probe parameters are not finite");
  }

  ProbeResult r;
  r.total = eval.size();
  r.predictions.resize(eval.size());
  for (std::size_t i = 0; i < eval.size(); ++i) {
    r.predictions[i] = head.predict(eval[i]);
    if (r.predictions[i] == eval_labels[i]) ++r.correct;
  }
  r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.total);
  return r;
}

}  // namespace embcodec
