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

#include "embcodec/quantizer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

#include "embcodec/error.hpp"
#include "embcodec/random.hpp"

namespace embcodec {

Tensor QuantizedEmbedding::to_tensor() const {
  std::vector<double> data(symbols.begin(), symbols.end());
  return Tensor({channels, tokens}, std::move(data));
}

Tensor add_uniform_noise(const Tensor& y, std::uint64_t seed) {
  Rng rng(seed);
  Tensor out = y;
  for (double& v : out.storage()) v += rng.uniform() - 0.5;
  return out;
}

double round_half_away(double v) noexcept { return std::round(v); }

QuantizedEmbedding round_quantize(const Tensor& y) {
  if (y.rank() != 2) throw DimensionError("round_quantize expects an e x n tensor");
  QuantizedEmbedding q(y.rows(), y.cols());
  constexpr double kLimit = 2147483647.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double v = y[i];
    if (!(std::abs(v) < kLimit)) throw RangeError("value " + std::to_string(v) + " does not fit a 32-bit symbol");
    q.symbols[i] = static_cast<std::int32_t>(round_half_away(v));
  }
  return q;
}

namespace {

void check_bits(int bits) {
  if (bits < 2 || bits > 8) throw DomainError("affine bit width must be in [2, 8]");
}

AffineQuantParams params_for(double lo, double hi, int bits) {
  if (!(hi > lo)) throw DegenerateInputError("constant tensor has no affine range");
  AffineQuantParams p;
  p.bits = bits;
  p.min = lo;
  p.scale = (hi - lo) / static_cast<double>(p.max_code());
  const double z = round_half_away(-lo / p.scale);
  p.zero_point = static_cast<std::int32_t>(std::clamp(z, 0.0, static_cast<double>(p.max_code())));
  return p;
}

std::uint16_t code_for(double v, double lo, double hi, std::uint32_t max_code) {
  // (v - min) * levels / (max - min) keeps exact ties such as 127.5 exact.
  const double c = round_half_away((v - lo) * static_cast<double>(max_code) / (hi - lo));
  return static_cast<std::uint16_t>(std::clamp(c, 0.0, static_cast<double>(max_code)));
}

}  // namespace

AffineQuantized affine_quantize(const Tensor& y, int bits) {
  check_bits(bits);
  if (y.size() == 0) throw DegenerateInputError("empty tensor");
  const auto [lo_it, hi_it] = std::minmax_element(y.values().begin(), y.values().end());
  const double lo = *lo_it, hi = *hi_it;
  AffineQuantized out{{}, params_for(lo, hi, bits)};
  out.codes.reserve(y.size());
  for (double v : y.values()) out.codes.push_back(code_for(v, lo, hi, out.params.max_code()));
  return out;
}

Tensor affine_dequantize(std::span<const std::uint16_t> codes, const AffineQuantParams& params,
                         const std::vector<std::size_t>& shape) {
  check_bits(params.bits);
  if (shape_product(shape) != codes.size()) throw DimensionError("code count does not match shape");
  Tensor out(shape);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (codes[i] > params.max_code()) throw FormatError("codes", "code " + std::to_string(codes[i]) + " out of range");
    out[i] = codes[i] * params.scale + params.min;
  }
  return out;
}

AffineQuantizedPerChannel affine_quantize_per_channel(const Tensor& y, int bits) {
  check_bits(bits);
  const std::size_t e = y.rows(), n = y.cols();
  AffineQuantizedPerChannel out;
  out.codes.resize(e * n);
  for (std::size_t c = 0; c < e; ++c) {
    const auto row = y.values().subspan(c * n, n);
    const auto [lo_it, hi_it] = std::minmax_element(row.begin(), row.end());
    if (row.empty()) throw DegenerateInputError("channel without tokens");
    const double lo = *lo_it, hi = *hi_it;
    out.params.push_back(params_for(lo, hi, bits));
    for (std::size_t t = 0; t < n; ++t) out.codes[c * n + t] = code_for(row[t], lo, hi, out.params.back().max_code());
  }
  return out;
}

Tensor affine_dequantize_per_channel(std::span<const std::uint16_t> codes, std::span<const AffineQuantParams> params,
                                     std::size_t tokens) {
  const std::size_t e = params.size();
  if (codes.size() != e * tokens) throw DimensionError("code count does not match shape");
  Tensor out = Tensor::matrix(e, tokens);
  for (std::size_t c = 0; c < e; ++c) {
    const auto& p = params[c];
    for (std::size_t t = 0; t < tokens; ++t) {
      const auto code = codes[c * tokens + t];
      if (code > p.max_code()) throw FormatError("codes", "code out of range");
      out(c, t) = code * p.scale + p.min;
    }
  }
  return out;
}

std::uint16_t float_to_half(float v) noexcept {
  const std::uint32_t x = std::bit_cast<std::uint32_t>(v);
  const std::uint32_t sign = (x >> 16) & 0x8000u;
  const std::uint32_t exp = (x >> 23) & 0xFFu;
  std::uint32_t mant = x & 0x7FFFFFu;
  if (exp == 0xFF) return static_cast<std::uint16_t>(sign | 0x7C00u | (mant ? 0x200u : 0u));
  const int e = static_cast<int>(exp) - 127 + 15;
  if (e >= 0x1F) return static_cast<std::uint16_t>(sign | 0x7C00u);
  if (e <= 0) {
    if (e < -10) return static_cast<std::uint16_t>(sign);
    mant |= 0x800000u;
    const int shift = 14 - e;
    std::uint32_t half = mant >> shift;
    const std::uint32_t rem = mant & ((1u << shift) - 1u);
    const std::uint32_t mid = 1u << (shift - 1);
    if (rem > mid || (rem == mid && (half & 1u))) ++half;
    return static_cast<std::uint16_t>(sign | half);
  }
  std::uint32_t half = sign | (static_cast<std::uint32_t>(e) << 10) | (mant >> 13);
  const std::uint32_t rem = mant & 0x1FFFu;
  if (rem > 0x1000u || (rem == 0x1000u && (half & 1u))) ++half;  // may carry into the exponent
  return static_cast<std::uint16_t>(half);
}

float half_to_float(std::uint16_t h) noexcept {
  const std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
  std::uint32_t exp = (h >> 10) & 0x1Fu;
  std::uint32_t mant = h & 0x3FFu;
  std::uint32_t bits;
  if (exp == 0) {
    if (mant == 0) {
      bits = sign;
    } else {
      int e = -1;
      do {
        ++e;
        mant <<= 1;
      } while (!(mant & 0x400u));
      bits = sign | (static_cast<std::uint32_t>(127 - 15 - e) << 23) | ((mant & 0x3FFu) << 13);
    }
  } else if (exp == 0x1F) {
    bits = sign | 0x7F800000u | (mant << 13);
  } else {
    bits = sign | ((exp - 15 + 127) << 23) | (mant << 13);
  }
  return std::bit_cast<float>(bits);
}

std::vector<std::uint8_t> pack_codes(std::span<const std::uint16_t> codes, int bits) {
  if (bits < 1 || bits > 16) throw DomainError("pack width must be in [1, 16]");
  std::vector<std::uint8_t> out((codes.size() * static_cast<std::size_t>(bits) + 7) / 8, 0);
  std::size_t pos = 0;
  for (auto c : codes) {
    for (int b = 0; b < bits; ++b, ++pos)
      if ((c >> b) & 1u) out[pos / 8] |= static_cast<std::uint8_t>(1u << (pos % 8));
  }
  return out;
}

std::vector<std::uint16_t> unpack_codes(std::span<const std::uint8_t> bytes, int bits, std::size_t count) {
  if (bits < 1 || bits > 16) throw DomainError("pack width must be in [1, 16]");
  if (bytes.size() * 8 < count * static_cast<std::size_t>(bits)) throw CorruptionError("packed code stream too short");
  std::vector<std::uint16_t> out(count, 0);
  std::size_t pos = 0;
  for (auto& c : out) {
    for (int b = 0; b < bits; ++b, ++pos)
      if ((bytes[pos / 8] >> (pos % 8)) & 1u) c = static_cast<std::uint16_t>(c | (1u << b));
  }
  return out;
}

}  // namespace embcodec
