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

#ifndef EMBCODEC_ENTROPY_MODEL_HPP_
#define EMBCODEC_ENTROPY_MODEL_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "embcodec/tensor.hpp"

namespace embcodec {

/// Fully factorized density over the channels of an e x n embedding.
///
/// Every channel owns an independent monotone network mapping a real x to a
/// CDF value. Layer k computes g = softplus(H_k) u + b_k; inner layers then
/// apply u' = g + tanh(a_k) * tanh(g), and the last layer's scalar output
/// goes through a sigmoid. Because softplus(H_k) > 0 and tanh(a_k) > -1, the
/// CDF is strictly increasing in x.
///
/// Parameters live in one flat vector, channel after channel. Within a channel
/// the order is H_1, b_1, a_1, H_2, b_2, a_2, ..., H_K, b_K.
class FactorizedDensity {
 public:
  static constexpr int kMaxWidth = 16;
  static constexpr int kMaxLayers = 8;
  static constexpr double kLikelihoodFloor = 1e-12;

  /// `filters` are the inner widths f_1..f_{K-1}; the default gives K = 4
  /// layers with widths (1, 3, 3, 3, 1). `init_scale` sets the initial spread
  /// of every channel's CDF. Biases are drawn from U(-0.5, 0.5) with `seed`.
  FactorizedDensity(int channels, std::vector<int> filters = {3, 3, 3}, double init_scale = 10.0,
                    std::uint64_t seed = 0);

  /// Single-layer model with softplus(H) = 1 and b = 0 in every channel: the
  /// CDF is exactly the standard logistic sigmoid.
  static FactorizedDensity logistic(int channels);

  int channels() const noexcept { return channels_; }
  int num_layers() const noexcept { return static_cast<int>(widths_.size()) - 1; }
  const std::vector<int>& widths() const noexcept { return widths_; }
  std::size_t params_per_channel() const noexcept { return per_channel_; }
  std::size_t num_params() const noexcept { return params_.size(); }

  std::span<double> params() noexcept { return params_; }
  std::span<const double> params() const noexcept { return params_; }

  /// Pre-sigmoid output of channel `channel` at `x`.
  double logit(int channel, double x) const;
  double cdf(int channel, double x) const;
  /// Mass of the unit bin centred on y: cdf(y + 1/2) - cdf(y - 1/2), floored
  /// at kLikelihoodFloor. Accepts real-valued y for the training path.
  double likelihood(int channel, double y) const;

  friend bool operator==(const FactorizedDensity&, const FactorizedDensity&) = default;

  struct LayerSlots {
    std::size_t h = 0, b = 0, a = 0;  // offsets inside a channel block
    int rows = 0, cols = 0;
    bool gated = false;
    friend bool operator==(const LayerSlots&, const LayerSlots&) = default;
  };
  const std::vector<LayerSlots>& layout() const noexcept { return layout_; }

 private:
  FactorizedDensity(int channels, std::vector<int> widths, bool);
  void build_layout();

  int channels_ = 0;
  std::vector<int> widths_;
  std::vector<LayerSlots> layout_;
  std::size_t per_channel_ = 0;
  std::vector<double> params_;
};

/// Total code length -sum log2 p_e(y[e, n]) in bits. `y` must be e x n.
double rate_bits(const FactorizedDensity& model, const Tensor& y);
double rate_bits_serial(const FactorizedDensity& model, const Tensor& y);

struct RateGradients {
  double bits = 0.0;
  std::vector<double> param_grad;  // same layout as FactorizedDensity::params()
  Tensor dy;                       // d bits / d y, e x n
};

/// Rate together with its analytic gradients w.r.t. every density parameter
/// and every entry of y. Channels are processed in parallel.
RateGradients rate_gradients(const FactorizedDensity& model, const Tensor& y);
RateGradients rate_gradients_serial(const FactorizedDensity& model, const Tensor& y);

struct FitOptions {
  std::size_t steps = 1000;
  double lr = 0.05;
  double clip_norm = 10.0;
};

struct FitResult {
  std::vector<double> loss_trace;  // mean bits per symbol before each update
};

/// Fits the density to `samples` (each e x n) by gradient descent on mean
/// bits per symbol, cycling through the samples one per step. Gradients are
/// clipped to `clip_norm`. Throws TrainingError on divergence.
FitResult fit(FactorizedDensity& model, std::span<const Tensor> samples, const FitOptions& options);

struct SymbolRange {
  std::int32_t min = 0;
  std::int32_t max = 0;
  friend bool operator==(const SymbolRange&, const SymbolRange&) = default;
};

/// Per-channel [floor(min) - 2, ceil(max) + 2] over all samples.
std::vector<SymbolRange> symbol_ranges_from_data(std::span<const Tensor> samples);
/// Per-channel range covering all but `tail` probability mass of the density.
std::vector<SymbolRange> symbol_ranges_from_density(const FactorizedDensity& model, double tail = 1e-9);

/// Integer frequency table for one channel. Slots cover symbol_min..symbol_max
/// followed by one escape slot. cumulative has freq.size() + 1 entries.
struct ChannelTable {
  std::int32_t symbol_min = 0;
  std::int32_t symbol_max = 0;
  std::vector<std::uint32_t> freq;
  std::vector<std::uint32_t> cumulative;

  std::size_t escape_index() const noexcept { return freq.size() - 1; }
  friend bool operator==(const ChannelTable&, const ChannelTable&) = default;
};

struct PMFTable {
  int precision_bits = 16;
  std::vector<ChannelTable> channels;
  friend bool operator==(const PMFTable&, const PMFTable&) = default;
};

constexpr std::int64_t kMaxTableSymbols = std::int64_t{1} << 20;

/// Quantizes a probability vector (last entry = escape mass) to integer
/// frequencies summing to exactly 2^precision_bits, each at least one. The
/// remaining mass is assigned by the largest-remainder method.
ChannelTable quantize_pmf(std::span<const double> probs, std::int32_t symbol_min, std::int32_t symbol_max,
                          int precision_bits);

PMFTable build_pmf_tables(const FactorizedDensity& model, std::span<const SymbolRange> ranges,
                          int precision_bits);

/// Rebuilds the cumulative array of a table whose frequencies were loaded
/// from disk, validating that they sum to 2^precision_bits.
void finalize_table(ChannelTable& table, int precision_bits);

// Density blob: "FDEN", u8 version, u16 e, u8 K, (K + 1) x u16 widths,
// per-channel f64 parameters, u8 has_ranges, optional e x (i32 min, i32 max).
struct DensityBlob {
  FactorizedDensity model;
  std::optional<std::vector<SymbolRange>> ranges;
};

std::vector<std::uint8_t> encode_density(const FactorizedDensity& model,
                                         const std::optional<std::vector<SymbolRange>>& ranges = {});
DensityBlob decode_density(std::span<const std::uint8_t> bytes);

}  // namespace embcodec

#endif  // EMBCODEC_ENTROPY_MODEL_HPP_
