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

#include "embcodec/entropy_model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>

#include "embcodec/binio.hpp"
#include "embcodec/error.hpp"
#include "embcodec/kernels.hpp"
#include "embcodec/random.hpp"

namespace embcodec {

FactorizedDensity::FactorizedDensity(int channels, std::vector<int> widths, bool)
    : channels_(channels), widths_(std::move(widths)) {
  if (channels <= 0 || channels > 65535) throw DomainError("channel count must be in [1, 65535]");
  if (widths_.size() < 2 || static_cast<int>(widths_.size()) - 1 > kMaxLayers)
    throw DomainError("layer count must be in [1, " + std::to_string(kMaxLayers) + "]");
  if (widths_.front() != 1 || widths_.back() != 1) throw DomainError("outer widths must be 1");
  for (int w : widths_)
    if (w < 1 || w > kMaxWidth) throw DomainError("filter width out of range");
  build_layout();
  params_.assign(per_channel_ * static_cast<std::size_t>(channels_), 0.0);
}

FactorizedDensity::FactorizedDensity(int channels, std::vector<int> filters, double init_scale,
                                     std::uint64_t seed)
    : FactorizedDensity(channels,
                        [&] {
                          std::vector<int> w{1};
                          w.insert(w.end(), filters.begin(), filters.end());
                          w.push_back(1);
                          return w;
                        }(),
                        true) {
  if (!(init_scale > 0)) throw DomainError("init_scale must be positive");
  const int K = num_layers();
  const double scale = std::pow(init_scale, 1.0 / K);
  Rng rng(seed);
  for (int c = 0; c < channels_; ++c) {
    double* p = params_.data() + per_channel_ * static_cast<std::size_t>(c);
    for (const auto& l : layout_) {
      const double h = softplus_inverse(1.0 / scale / l.rows);
      std::fill(p + l.h, p + l.h + static_cast<std::size_t>(l.rows * l.cols), h);
      for (int i = 0; i < l.rows; ++i) p[l.b + i] = rng.uniform(-0.5, 0.5);
      // gates start at zero
    }
  }
}

FactorizedDensity FactorizedDensity::logistic(int channels) {
  FactorizedDensity d(channels, std::vector<int>{1, 1}, true);
  const double h = softplus_inverse(1.0);
  for (int c = 0; c < channels; ++c) d.params_[d.per_channel_ * c + d.layout_[0].h] = h;
  return d;
}

void FactorizedDensity::build_layout() {
  layout_.clear();
  std::size_t off = 0;
  const int K = num_layers();
  for (int k = 1; k <= K; ++k) {
    LayerSlots l;
    l.rows = widths_[k];
    l.cols = widths_[k - 1];
    l.gated = k < K;
    l.h = off;
    off += static_cast<std::size_t>(l.rows * l.cols);
    l.b = off;
    off += static_cast<std::size_t>(l.rows);
    if (l.gated) {
      l.a = off;
      off += static_cast<std::size_t>(l.rows);
    }
    layout_.push_back(l);
  }
  per_channel_ = off;
}

namespace {

using Vec = std::array<double, FactorizedDensity::kMaxWidth>;

// Effective per-channel weights: softplus(H), b, tanh(a), plus the local
// derivative that maps a gradient on the effective value back to the raw
// parameter (sigmoid(H), 1, 1 - tanh^2(a)).
struct ChannelNet {
  const std::vector<FactorizedDensity::LayerSlots>* layout = nullptr;
  std::vector<double> eff;
  std::vector<double> deriv;

  ChannelNet(const FactorizedDensity& model, int channel) : layout(&model.layout()) {
    if (channel < 0 || channel >= model.channels())
      throw IndexError("channel " + std::to_string(channel) + " out of range");
    const std::size_t n = model.params_per_channel();
    const double* raw = model.params().data() + n * static_cast<std::size_t>(channel);
    eff.assign(raw, raw + n);
    deriv.assign(n, 1.0);
    for (const auto& l : *layout) {
      for (int i = 0; i < l.rows * l.cols; ++i) {
        eff[l.h + i] = softplus(raw[l.h + i]);
        deriv[l.h + i] = sigmoid(raw[l.h + i]);
      }
      if (l.gated) {
        for (int i = 0; i < l.rows; ++i) {
          const double t = std::tanh(raw[l.a + i]);
          eff[l.a + i] = t;
          deriv[l.a + i] = 1.0 - t * t;
        }
      }
    }
  }

  struct Trace {
    std::array<Vec, FactorizedDensity::kMaxLayers + 1> u{};  // layer inputs/outputs
    std::array<Vec, FactorizedDensity::kMaxLayers> t{};      // tanh(g) for gated layers
  };

  double forward(double x, Trace* trace) const {
    Vec u{};
    u[0] = x;
    if (trace) trace->u[0] = u;
    double out = 0.0;
    for (std::size_t k = 0; k < layout->size(); ++k) {
      const auto& l = (*layout)[k];
      Vec next{};
      for (int i = 0; i < l.rows; ++i) {
        double g = eff[l.b + i];
        const double* w = eff.data() + l.h + static_cast<std::size_t>(i * l.cols);
        for (int j = 0; j < l.cols; ++j) g += w[j] * u[j];
        if (l.gated) {
          const double tg = std::tanh(g);
          if (trace) trace->t[k][i] = tg;
          next[i] = g + eff[l.a + i] * tg;
        } else {
          next[i] = g;
        }
      }
      u = next;
      if (trace) trace->u[k + 1] = u;
      out = u[0];
    }
    return out;
  }

  // Accumulates d(out)/d(eff) * dout into grad_eff and returns d(out)/dx * dout.
  double backward(const Trace& trace, double dout, std::span<double> grad_eff) const {
    Vec du{};
    du[0] = dout;
    for (std::size_t kk = layout->size(); kk-- > 0;) {
      const auto& l = (*layout)[kk];
      Vec dg{};
      for (int i = 0; i < l.rows; ++i) {
        if (l.gated) {
          const double tg = trace.t[kk][i];
          grad_eff[l.a + i] += du[i] * tg;
          dg[i] = du[i] * (1.0 + eff[l.a + i] * (1.0 - tg * tg));
        } else {
          dg[i] = du[i];
        }
        grad_eff[l.b + i] += dg[i];
      }
      const Vec& uin = trace.u[kk];
      Vec dprev{};
      for (int i = 0; i < l.rows; ++i) {
        const std::size_t row = l.h + static_cast<std::size_t>(i * l.cols);
        for (int j = 0; j < l.cols; ++j) {
          grad_eff[row + j] += dg[i] * uin[j];
          dprev[j] += eff[row + j] * dg[i];
        }
      }
      du = dprev;
    }
    return du[0];
  }
};

// Sigmoid derivative, stable at large |z|.
double dsigmoid(double z) { return sigmoid(z) * sigmoid(-z); }

// Bin mass from lower/upper logits. Subtracting in the tail where both
// sigmoids are close to zero keeps relative precision.
double bin_mass(double lower, double upper) {
  if (lower + upper > 0) return sigmoid(-lower) - sigmoid(-upper);
  return sigmoid(upper) - sigmoid(lower);
}

void check_shape(const FactorizedDensity& model, const Tensor& y) {
  if (y.rank() != 2 || y.rows() != static_cast<std::size_t>(model.channels())) {
    throw DimensionError("rate input " + shape_string(y.shape()) + " does not match " +
                         std::to_string(model.channels()) + " channels");
  }
}

double channel_bits(const FactorizedDensity& model, const Tensor& y, int c) {
  const ChannelNet net(model, c);
  const std::size_t n = y.cols();
  double bits = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double v = y(static_cast<std::size_t>(c), j);
    const double p = bin_mass(net.forward(v - 0.5, nullptr), net.forward(v + 0.5, nullptr));
    bits -= std::log2(std::max(p, FactorizedDensity::kLikelihoodFloor));
  }
  return bits;
}

double channel_gradients(const FactorizedDensity& model, const Tensor& y, int c, std::span<double> grad_raw,
                         Tensor& dy) {
  const ChannelNet net(model, c);
  const std::size_t n = y.cols();
  std::vector<double> grad_eff(net.eff.size(), 0.0);
  ChannelNet::Trace lo, hi;
  double bits = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double v = y(static_cast<std::size_t>(c), j);
    const double lower = net.forward(v - 0.5, &lo);
    const double upper = net.forward(v + 0.5, &hi);
    const double p = bin_mass(lower, upper);
    if (p > FactorizedDensity::kLikelihoodFloor) {
      bits -= std::log2(p);
      const double dbits_dp = -1.0 / (p * std::numbers::ln2);
      const double dx_hi = net.backward(hi, dbits_dp * dsigmoid(upper), grad_eff);
      const double dx_lo = net.backward(lo, -dbits_dp * dsigmoid(lower), grad_eff);
      dy(static_cast<std::size_t>(c), j) = dx_hi + dx_lo;
    } else {
      // NaN input propagates so callers can detect divergence.
      bits -= std::isnan(p) ? p : std::log2(FactorizedDensity::kLikelihoodFloor);
      dy(static_cast<std::size_t>(c), j) = 0.0;
    }
  }
  for (std::size_t i = 0; i < grad_eff.size(); ++i) grad_raw[i] = grad_eff[i] * net.deriv[i];
  return bits;
}

}  // namespace

double FactorizedDensity::logit(int channel, double x) const { return ChannelNet(*this, channel).forward(x, nullptr); }

double FactorizedDensity::cdf(int channel, double x) const { return sigmoid(logit(channel, x)); }

double FactorizedDensity::likelihood(int channel, double y) const {
  const ChannelNet net(*this, channel);
  const double p = bin_mass(net.forward(y - 0.5, nullptr), net.forward(y + 0.5, nullptr));
  return std::max(p, kLikelihoodFloor);
}

double rate_bits(const FactorizedDensity& model, const Tensor& y) {
  check_shape(model, y);
  const int e = model.channels();
  std::vector<double> per_channel(static_cast<std::size_t>(e));
#pragma omp parallel for schedule(static) if (y.size() > 4096)
  for (int c = 0; c < e; ++c) per_channel[c] = channel_bits(model, y, c);
  return std::accumulate(per_channel.begin(), per_channel.end(), 0.0);
}

double rate_bits_serial(const FactorizedDensity& model, const Tensor& y) {
  check_shape(model, y);
  double total = 0.0;
  for (int c = 0; c < model.channels(); ++c) total += channel_bits(model, y, c);
  return total;
}

RateGradients rate_gradients(const FactorizedDensity& model, const Tensor& y) {
  check_shape(model, y);
  const int e = model.channels();
  const std::size_t ppc = model.params_per_channel();
  RateGradients out{0.0, std::vector<double>(model.num_params(), 0.0), Tensor(y.shape())};
  std::vector<double> per_channel(static_cast<std::size_t>(e));
#pragma omp parallel for schedule(static) if (y.size() > 1024)
  for (int c = 0; c < e; ++c) {
    per_channel[c] =
        channel_gradients(model, y, c, std::span<double>(out.param_grad).subspan(ppc * c, ppc), out.dy);
  }
  out.bits = std::accumulate(per_channel.begin(), per_channel.end(), 0.0);
  return out;
}

RateGradients rate_gradients_serial(const FactorizedDensity& model, const Tensor& y) {
  check_shape(model, y);
  const std::size_t ppc = model.params_per_channel();
  RateGradients out{0.0, std::vector<double>(model.num_params(), 0.0), Tensor(y.shape())};
  for (int c = 0; c < model.channels(); ++c)
    out.bits += channel_gradients(model, y, c, std::span<double>(out.param_grad).subspan(ppc * c, ppc), out.dy);
  return out;
}

FitResult fit(FactorizedDensity& model, std::span<const Tensor> samples, const FitOptions& options) {
  if (!(options.lr > 0)) throw DomainError("learning rate must be positive");
  if (samples.empty() && options.steps > 0) throw DomainError("fit needs at least one sample");
  FitResult result;
  result.loss_trace.reserve(options.steps);
  auto params = model.params();
  for (std::size_t step = 0; step < options.steps; ++step) {
    const Tensor& batch = samples[step % samples.size()];
    RateGradients g = rate_gradients(model, batch);
    const double count = static_cast<double>(batch.size());
    const double loss = g.bits / count;
    double norm2 = 0.0;
    for (double& v : g.param_grad) {
      v /= count;
      norm2 += v * v;
    }
    if (!std::isfinite(loss) || !std::isfinite(norm2)) throw TrainingError(step, "density fit diverged");
    const double norm = std::sqrt(norm2);
    const double scale = norm > options.clip_norm ? options.clip_norm / norm : 1.0;
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= options.lr * scale * g.param_grad[i];
    result.loss_trace.push_back(loss);
  }
  return result;
}

std::vector<SymbolRange> symbol_ranges_from_data(std::span<const Tensor> samples) {
  if (samples.empty()) throw DomainError("no samples to derive symbol ranges from");
  const std::size_t e = samples.front().rows();
  std::vector<double> lo(e, std::numeric_limits<double>::infinity());
  std::vector<double> hi(e, -std::numeric_limits<double>::infinity());
  for (const auto& s : samples) {
    if (s.rows() != e) throw DimensionError("samples disagree on channel count");
    for (std::size_t c = 0; c < e; ++c)
      for (std::size_t j = 0; j < s.cols(); ++j) {
        lo[c] = std::min(lo[c], s(c, j));
        hi[c] = std::max(hi[c], s(c, j));
      }
  }
  std::vector<SymbolRange> out(e);
  for (std::size_t c = 0; c < e; ++c) {
    if (!std::isfinite(lo[c])) lo[c] = hi[c] = 0.0;  // channel with no tokens
    const double a = std::floor(lo[c]) - 2, b = std::ceil(hi[c]) + 2;
    if (a < INT32_MIN || b > INT32_MAX) throw RangeError("symbol range exceeds 32 bits");
    out[c] = {static_cast<std::int32_t>(a), static_cast<std::int32_t>(b)};
  }
  return out;
}

std::vector<SymbolRange> symbol_ranges_from_density(const FactorizedDensity& model, double tail) {
  std::vector<SymbolRange> out(static_cast<std::size_t>(model.channels()));
  for (int c = 0; c < model.channels(); ++c) {
    // Expand outward from zero until the tail mass on each side is below `tail`.
    std::int32_t lo = 0, hi = 0;
    while (model.cdf(c, lo - 0.5) > tail && lo > -(1 << 19)) --lo;
    while (1.0 - model.cdf(c, hi + 0.5) > tail && hi < (1 << 19)) ++hi;
    out[static_cast<std::size_t>(c)] = {lo, hi};
  }
  return out;
}

ChannelTable quantize_pmf(std::span<const double> probs, std::int32_t symbol_min, std::int32_t symbol_max,
                          int precision_bits) {
  if (precision_bits < 8 || precision_bits > 16) throw RangeError("precision_bits must lie in [8, 16]");
  if (symbol_min > symbol_max) throw RangeError("symbol_min exceeds symbol_max");
  const std::int64_t width = std::int64_t{symbol_max} - symbol_min + 1;
  if (width > kMaxTableSymbols) throw RangeError("symbol range wider than 2^20 symbols");
  const std::size_t slots = static_cast<std::size_t>(width) + 1;
  if (probs.size() != slots) throw DimensionError("probability vector does not match the symbol range");
  const std::uint64_t total = std::uint64_t{1} << precision_bits;
  if (slots > total) throw RangeError("more table slots than 2^precision_bits");

  double mass = 0.0;
  for (double p : probs) mass += std::max(p, 0.0);
  const std::uint64_t spare = total - slots;

  ChannelTable t;
  t.symbol_min = symbol_min;
  t.symbol_max = symbol_max;
  t.freq.assign(slots, 1);
  std::vector<double> frac(slots, 0.0);
  std::uint64_t used = 0;
  if (mass > 0) {
    for (std::size_t i = 0; i < slots; ++i) {
      const double share = std::max(probs[i], 0.0) / mass * static_cast<double>(spare);
      const double whole = std::floor(share);
      t.freq[i] += static_cast<std::uint32_t>(whole);
      used += static_cast<std::uint64_t>(whole);
      frac[i] = share - whole;
    }
  }
  if (used > spare) throw NumericError("pmf quantization overshoot");
  std::vector<std::size_t> order(slots);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  std::uint64_t left = spare - used;
  for (std::size_t i = 0; left > 0; i = (i + 1) % slots, --left) ++t.freq[order[i]];
  finalize_table(t, precision_bits);
  return t;
}

void finalize_table(ChannelTable& table, int precision_bits) {
  table.cumulative.assign(table.freq.size() + 1, 0);
  std::uint64_t acc = 0;
  for (std::size_t i = 0; i < table.freq.size(); ++i) {
    if (table.freq[i] == 0) throw FormatError("frequencies", "zero frequency slot");
    table.cumulative[i] = static_cast<std::uint32_t>(acc);
    acc += table.freq[i];
  }
  if (acc != (std::uint64_t{1} << precision_bits)) throw FormatError("frequencies", "table does not sum to 2^precision");
  table.cumulative.back() = static_cast<std::uint32_t>(acc);
}

PMFTable build_pmf_tables(const FactorizedDensity& model, std::span<const SymbolRange> ranges, int precision_bits) {
  if (ranges.size() != static_cast<std::size_t>(model.channels()))
    throw DimensionError("need one symbol range per channel");
  PMFTable out;
  out.precision_bits = precision_bits;
  out.channels.reserve(ranges.size());
  for (int c = 0; c < model.channels(); ++c) {
    const auto r = ranges[static_cast<std::size_t>(c)];
    if (r.min > r.max) throw RangeError("symbol_min exceeds symbol_max");
    if (std::int64_t{r.max} - r.min + 1 > kMaxTableSymbols) throw RangeError("symbol range wider than 2^20 symbols");
    const ChannelNet net(model, c);
    const std::size_t width = static_cast<std::size_t>(std::int64_t{r.max} - r.min + 1);
    std::vector<double> probs(width + 1);
    // Consecutive bins share an edge; evaluate each edge once.
    double prev = net.forward(r.min - 0.5, nullptr);
    const double first = prev;
    for (std::size_t i = 0; i < width; ++i) {
      const double next = net.forward(r.min + static_cast<double>(i) + 0.5, nullptr);
      probs[i] = bin_mass(prev, next);
      prev = next;
    }
    probs[width] = sigmoid(first) + sigmoid(-prev);
    out.channels.push_back(quantize_pmf(probs, r.min, r.max, precision_bits));
  }
  return out;
}

namespace {
constexpr char kDensityMagic[4] = {'F', 'D', 'E', 'N'};
constexpr std::uint8_t kDensityVersion = 1;
}  // namespace

std::vector<std::uint8_t> encode_density(const FactorizedDensity& model,
                                         const std::optional<std::vector<SymbolRange>>& ranges) {
  ByteWriter w;
  w.raw(kDensityMagic, 4);
  w.u8(kDensityVersion);
  w.u16(static_cast<std::uint16_t>(model.channels()));
  w.u8(static_cast<std::uint8_t>(model.num_layers()));
  for (int width : model.widths()) w.u16(static_cast<std::uint16_t>(width));
  for (double v : model.params()) w.f64(v);
  if (ranges) {
    if (ranges->size() != static_cast<std::size_t>(model.channels()))
      throw DimensionError("need one symbol range per channel");
    w.u8(1);
    for (const auto& r : *ranges) {
      w.i32(r.min);
      w.i32(r.max);
    }
  } else {
    w.u8(0);
  }
  return w.take();
}

DensityBlob decode_density(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  auto magic = r.bytes(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), kDensityMagic)) throw FormatError("magic", "not a density blob");
  const auto version = r.u8("version");
  if (version != kDensityVersion) throw FormatError("version", "unsupported density version " + std::to_string(version));
  const int e = r.u16("channels");
  const int K = r.u8("layers");
  std::vector<int> widths(static_cast<std::size_t>(K) + 1);
  for (auto& w : widths) w = r.u16("widths");
  if (K < 1 || widths.front() != 1 || widths.back() != 1) throw FormatError("widths", "invalid layer widths");
  std::vector<int> filters(widths.begin() + 1, widths.end() - 1);
  FactorizedDensity model(e, filters, 1.0, 0);
  for (double& v : model.params()) v = r.f64("params");
  DensityBlob blob{std::move(model), std::nullopt};
  if (r.u8("has_ranges")) {
    std::vector<SymbolRange> ranges(static_cast<std::size_t>(e));
    for (auto& range : ranges) {
      range.min = r.i32("ranges");
      range.max = r.i32("ranges");
    }
    blob.ranges = std::move(ranges);
  }
  if (r.remaining()) throw FormatError("trailer", "unexpected bytes after density blob");
  return blob;
}

}  // namespace embcodec
