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

#ifndef EMBCODEC_QUANTIZER_HPP_
#define EMBCODEC_QUANTIZER_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "embcodec/tensor.hpp"

namespace embcodec {

/// Integer symbol grid of shape e x n (channels x tokens), row-major.
struct QuantizedEmbedding {
  std::size_t channels = 0;
  std::size_t tokens = 0;
  std::vector<std::int32_t> symbols;

  QuantizedEmbedding() = default;
  QuantizedEmbedding(std::size_t e, std::size_t n) : channels(e), tokens(n), symbols(e * n, 0) {}

  std::int32_t& at(std::size_t c, std::size_t t) { return symbols[c * tokens + t]; }
  std::int32_t at(std::size_t c, std::size_t t) const { return symbols[c * tokens + t]; }
  Tensor to_tensor() const;

  friend bool operator==(const QuantizedEmbedding&, const QuantizedEmbedding&) = default;
};

/// y + u with u ~ U(-1/2, 1/2) i.i.d., drawn from a stream seeded by `seed`.
Tensor add_uniform_noise(const Tensor& y, std::uint64_t seed);

/// Rounds half away from zero. Requires an e x n tensor; throws RangeError
/// when a value does not fit in a signed 32-bit symbol.
QuantizedEmbedding round_quantize(const Tensor& y);

/// Single-value form of the rounding rule used everywhere in the codec.
double round_half_away(double v) noexcept;

struct AffineQuantParams {
  int bits = 8;
  double scale = 1.0;   // (max - min) / (2^bits - 1)
  double min = 0.0;     // offset used by dequantization
  std::int32_t zero_point = 0;  // round(-min / scale) clamped to the code range

  std::uint32_t max_code() const noexcept { return (1u << bits) - 1u; }
  friend bool operator==(const AffineQuantParams&, const AffineQuantParams&) = default;
};

struct AffineQuantized {
  std::vector<std::uint16_t> codes;
  AffineQuantParams params;
};

/// Per-tensor affine quantization to `bits` in [2, 8]:
/// code = clamp(round((y - min) / scale), 0, 2^bits - 1). Throws
/// DegenerateInputError on a constant tensor.
AffineQuantized affine_quantize(const Tensor& y, int bits);
/// codes * scale + min, shaped like `shape`. Throws FormatError for codes
/// outside the code range.
Tensor affine_dequantize(std::span<const std::uint16_t> codes, const AffineQuantParams& params,
                         const std::vector<std::size_t>& shape);

/// Per-channel variant: one parameter set per row of an e x n tensor.
struct AffineQuantizedPerChannel {
  std::vector<std::uint16_t> codes;
  std::vector<AffineQuantParams> params;
};
AffineQuantizedPerChannel affine_quantize_per_channel(const Tensor& y, int bits);
Tensor affine_dequantize_per_channel(std::span<const std::uint16_t> codes,
                                     std::span<const AffineQuantParams> params, std::size_t tokens);

/// IEEE binary16 storage conversion, round-to-nearest-even.
std::uint16_t float_to_half(float v) noexcept;
float half_to_float(std::uint16_t h) noexcept;

/// Bit-packs codes of width `bits` LSB-first into bytes, and back.
std::vector<std::uint8_t> pack_codes(std::span<const std::uint16_t> codes, int bits);
std::vector<std::uint16_t> unpack_codes(std::span<const std::uint8_t> bytes, int bits, std::size_t count);

}  // namespace embcodec

#endif  // EMBCODEC_QUANTIZER_HPP_
