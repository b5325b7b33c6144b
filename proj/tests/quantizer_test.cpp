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

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "embcodec/error.hpp"
#include "embcodec/quantizer.hpp"
#include "embcodec/random.hpp"

using namespace embcodec;

namespace {

Tensor random_grid(std::size_t e, std::size_t n, double sd, std::uint64_t seed) {
  Rng rng(seed);
  Tensor y = Tensor::matrix(e, n);
  for (double& v : y.storage()) v = rng.normal(0, sd);
  return y;
}

}  // namespace

TEST(UniformNoise, BoundedDeterministicAndCentred) {
  const Tensor y = random_grid(8, 500, 3.0, 1);
  const Tensor a = add_uniform_noise(y, 42), b = add_uniform_noise(y, 42), c = add_uniform_noise(y, 43);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  double mean = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double u = a[i] - y[i];
    ASSERT_GE(u, -0.5);
    ASSERT_LE(u, 0.5);
    mean += u;
  }
  mean /= static_cast<double>(y.size());
  // Standard error of the mean is sqrt(1/12 / 4000) ~ 0.0046.
  EXPECT_LT(std::abs(mean), 0.02);
}

TEST(RoundQuantize, TiesGoAwayFromZero) {
  const Tensor y = Tensor::from_rows({{0.5, -0.5, 1.5, -1.5, 2.4999, -2.5001}});
  const auto q = round_quantize(y);
  const std::vector<std::int32_t> want{1, -1, 2, -2, 2, -3};
  EXPECT_EQ(q.symbols, want);
  EXPECT_EQ(q.to_tensor(), Tensor::from_rows({{1, -1, 2, -2, 2, -3}}));
}

TEST(RoundQuantize, IsIdempotentOnIntegers) {
  const Tensor y = Tensor::from_rows({{-3, 0, 7}, {12, -1, 4}});
  EXPECT_EQ(round_quantize(y).to_tensor(), y);
}

TEST(RoundQuantize, RejectsOutOfRangeAndWrongRank) {
  EXPECT_THROW(round_quantize(Tensor::from_rows({{3e9}})), RangeError);
  EXPECT_THROW(round_quantize(Tensor::from_rows({{std::nan("")}})), RangeError);
  EXPECT_THROW(round_quantize(Tensor({3})), DimensionError);
}

TEST(Affine, EndpointsAndMidpoint) {
  const Tensor y = Tensor::from_rows({{-1.0, 0.0, 1.0}});
  const auto q = affine_quantize(y, 8);
  EXPECT_EQ(q.codes[0], 0);
  EXPECT_EQ(q.codes[1], 128);  // 127.5 rounds away from zero
  EXPECT_EQ(q.codes[2], 255);
  EXPECT_DOUBLE_EQ(q.params.scale, 2.0 / 255.0);
  EXPECT_DOUBLE_EQ(q.params.min, -1.0);
  EXPECT_GE(q.params.zero_point, 127);
  EXPECT_LE(q.params.zero_point, 128);
}

TEST(Affine, TwoBitCodes) {
  const Tensor y = Tensor::from_rows({{0.0, 0.3, 0.5, 0.7, 1.0}});
  const auto q = affine_quantize(y, 2);
  // Levels at 0, 1/3, 2/3, 1.
  const std::vector<std::uint16_t> want{0, 1, 2, 2, 3};
  EXPECT_EQ(q.codes, want);
}

TEST(Affine, ErrorWithinHalfStep) {
  for (int bits : {2, 4, 8}) {
    const Tensor y = random_grid(4, 300, 2.0, static_cast<std::uint64_t>(bits));
    const auto q = affine_quantize(y, bits);
    const Tensor r = affine_dequantize(q.codes, q.params, y.shape());
    double max_abs = 0;
    for (double v : y.values()) max_abs = std::max(max_abs, std::abs(v));
    const double slack = 8 * std::numeric_limits<double>::epsilon() * max_abs;
    for (std::size_t i = 0; i < y.size(); ++i) EXPECT_LE(std::abs(r[i] - y[i]), q.params.scale / 2 + slack);
  }
}

TEST(Affine, DequantizedValuesAreFixedPoints) {
  const Tensor y = random_grid(3, 50, 1.0, 5);
  const auto q = affine_quantize(y, 6);
  const Tensor r = affine_dequantize(q.codes, q.params, y.shape());
  EXPECT_EQ(affine_quantize(r, 6).codes, q.codes);
}

TEST(Affine, ConstantTensorIsDegenerate) {
  EXPECT_THROW(affine_quantize(Tensor({2, 3}, 1.25), 8), DegenerateInputError);
}

TEST(Affine, BitWidthOutsideRangeThrows) {
  const Tensor y = Tensor::from_rows({{0.0, 1.0}});
  EXPECT_THROW(affine_quantize(y, 1), DomainError);
  EXPECT_THROW(affine_quantize(y, 9), DomainError);
}

TEST(Affine, DequantizeRejectsForeignCodes) {
  const AffineQuantParams p{.bits = 2, .scale = 1.0, .min = 0.0, .zero_point = 0};
  const std::vector<std::uint16_t> codes{0, 4};
  EXPECT_THROW(affine_dequantize(codes, p, {2}), FormatError);
  EXPECT_THROW(affine_dequantize(codes, p, {3}), DimensionError);
}

TEST(Affine, PerChannelUsesEachRowsRange) {
  const Tensor y = Tensor::from_rows({{0.0, 1.0, 0.5}, {-10.0, 10.0, 0.0}});
  const auto q = affine_quantize_per_channel(y, 8);
  ASSERT_EQ(q.params.size(), 2u);
  EXPECT_DOUBLE_EQ(q.params[0].scale, 1.0 / 255.0);
  EXPECT_DOUBLE_EQ(q.params[1].scale, 20.0 / 255.0);
  const Tensor r = affine_dequantize_per_channel(q.codes, q.params, 3);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t t = 0; t < 3; ++t) EXPECT_LE(std::abs(r(c, t) - y(c, t)), q.params[c].scale / 2 + 1e-12);
}

TEST(Half, KnownValues) {
  EXPECT_EQ(float_to_half(1.0f), 0x3C00);
  EXPECT_EQ(float_to_half(-2.0f), 0xC000);
  EXPECT_EQ(float_to_half(65504.0f), 0x7BFF);
  EXPECT_EQ(float_to_half(1e6f), 0x7C00);
  EXPECT_EQ(float_to_half(0.0f), 0x0000);
  EXPECT_EQ(float_to_half(5.9604645e-8f), 0x0001);  // smallest subnormal
  // 1 + 2^-11 is halfway between 1 and the next half; ties go to even.
  EXPECT_EQ(float_to_half(1.0f + 1.0f / 2048.0f), 0x3C00);
  EXPECT_EQ(half_to_float(0x3555), 0.333251953125f);
  EXPECT_TRUE(std::isnan(half_to_float(float_to_half(std::nanf("")))));
}

TEST(Half, RoundTripsEveryFiniteHalf) {
  for (std::uint32_t h = 0; h < 0x10000; ++h) {
    if (((h >> 10) & 0x1F) == 0x1F) continue;
    ASSERT_EQ(float_to_half(half_to_float(static_cast<std::uint16_t>(h))), h) << h;
  }
}

TEST(PackCodes, RoundTripAndSize) {
  Rng rng(3);
  for (int bits : {2, 3, 5, 8, 16}) {
    std::vector<std::uint16_t> codes(101);
    for (auto& c : codes) c = static_cast<std::uint16_t>(rng.below(1u << bits));
    const auto packed = pack_codes(codes, bits);
    EXPECT_EQ(packed.size(), (101 * static_cast<std::size_t>(bits) + 7) / 8);
    EXPECT_EQ(unpack_codes(packed, bits, codes.size()), codes);
  }
  const std::vector<std::uint16_t> two{1, 2, 3, 0};
  EXPECT_EQ(pack_codes(two, 2), std::vector<std::uint8_t>{0x39});
}
