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
#include <numeric>

#include "embcodec/error.hpp"
#include "embcodec/gradcheck.hpp"
#include "embcodec/kernels.hpp"
#include "embcodec/random.hpp"
#include "embcodec/tensor.hpp"

using namespace embcodec;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Tensor t = Tensor::matrix(r, c);
  for (double& v : t.storage()) v = rng.normal();
  return t;
}

// Triple-loop oracle kept independent of the kernels under test.
Tensor triple_loop(const Tensor& a, const Tensor& b) {
  Tensor c = Tensor::matrix(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

}  // namespace

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  const Tensor m = Tensor::from_rows({{1, 2}, {3, 4}});
  EXPECT_EQ(matmul(Tensor::identity(2), m), m);
}

TEST(Matmul, ProjectorKeepsFirstCoordinate) {
  const Tensor p = Tensor::from_rows({{1, 0}, {0, 0}});
  const Tensor v = Tensor::from_rows({{5}, {7}});
  EXPECT_EQ(matmul(p, v), Tensor::from_rows({{5}, {0}}));
}

TEST(Matmul, MatchesTripleLoopOracle) {
  Rng rng(3);
  const Tensor a = random_matrix(3, 4, rng), b = random_matrix(4, 2, rng);
  const Tensor got = matmul(a, b), want = triple_loop(a, b);
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
}

TEST(Matmul, ShapeMismatchThrows) {
  EXPECT_THROW(matmul(Tensor::matrix(2, 3), Tensor::matrix(2, 3)), DimensionError);
}

TEST(Matmul, AssociativeOnRandomTriples) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor a = random_matrix(5, 7, rng), b = random_matrix(7, 3, rng), c = random_matrix(3, 6, rng);
    const Tensor l = matmul(matmul(a, b), c), r = matmul(a, matmul(b, c));
    for (std::size_t i = 0; i < l.size(); ++i)
      EXPECT_LE(std::abs(l[i] - r[i]), 1e-9 * std::max(1.0, std::abs(l[i])));
  }
}

TEST(Matmul, ParallelKernelsAreBitIdenticalToSerial) {
  Rng rng(5);
  // Large enough to take the threaded path.
  const Tensor a = random_matrix(96, 80, rng), b = random_matrix(80, 72, rng);
  EXPECT_EQ(matmul(a, b), matmul_serial(a, b));

  std::vector<double> c1(80 * 72), c2(80 * 72);
  const Tensor d = random_matrix(96, 72, rng);
  kernels::gemm_tn(a.values(), d.values(), c1, 96, 80, 72);
  kernels::serial::gemm_tn(a.values(), d.values(), c2, 96, 80, 72);
  EXPECT_EQ(c1, c2);

  std::vector<double> e1(96 * 80), e2(96 * 80);
  const Tensor bt = b.transposed();  // 72 x 80
  kernels::gemm_nt(d.values(), bt.values(), e1, 96, 72, 80);
  kernels::serial::gemm_nt(d.values(), bt.values(), e2, 96, 72, 80);
  EXPECT_EQ(e1, e2);
}

TEST(Elementwise, ClosedFormValues) {
  const Tensor zero({1}, 0.0);
  EXPECT_DOUBLE_EQ(elementwise(Unary::kSigmoid, zero)[0], 0.5);
  EXPECT_NEAR(elementwise(Unary::kSoftplus, zero)[0], 0.6931472, 1e-7);
  EXPECT_DOUBLE_EQ(softplus(40.0), 40.0);
  EXPECT_TRUE(std::isfinite(softplus(1000.0)));
  EXPECT_NEAR(softplus(-50.0), std::exp(-50.0), 1e-30);
}

TEST(Elementwise, TanhIsOdd) {
  Tensor grid({201});
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = -5.0 + 0.05 * static_cast<double>(i);
  Tensor neg = grid;
  for (double& v : neg.storage()) v = -v;
  const Tensor a = elementwise(Unary::kTanh, grid), b = elementwise(Unary::kTanh, neg);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], -b[i]);
}

TEST(Elementwise, LogOfNonPositiveThrows) {
  EXPECT_THROW(elementwise(Unary::kLog, Tensor({2}, std::vector<double>{1.0, 0.0})), DomainError);
}

TEST(Elementwise, IsPure) {
  Rng rng(2);
  const Tensor x = random_matrix(4, 4, rng);
  EXPECT_EQ(elementwise(Unary::kSoftplus, x), elementwise(Unary::kSoftplus, x));
}

TEST(GradCheck, QuadraticLoss) {
  const LossFn loss = [](std::span<const double> p, std::span<double> g) {
    double s = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      s += 0.5 * p[i] * p[i];
      if (!g.empty()) g[i] = p[i];
    }
    return s;
  };
  std::vector<double> p{0.3, -1.7, 2.5, 0.01};
  EXPECT_LT(grad_check(loss, p, 1e-5).max_rel_error, 1e-6);
}

TEST(GradCheck, SumOfSigmoids) {
  const LossFn loss = [](std::span<const double> p, std::span<double> g) {
    double s = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      s += sigmoid(p[i]);
      if (!g.empty()) g[i] = sigmoid(p[i]) * sigmoid(-p[i]);
    }
    return s;
  };
  Rng rng(9);
  std::vector<double> p(50);
  for (double& v : p) v = rng.normal(0, 2);
  EXPECT_LT(grad_check(loss, p, 1e-4).max_rel_error, 1e-5);
  EXPECT_EQ(grad_check(loss, p, 1e-4).max_rel_error, grad_check_serial(loss, p, 1e-4).max_rel_error);
}

TEST(GradCheck, ConstantLossHasZeroError) {
  const LossFn loss = [](std::span<const double>, std::span<double> g) {
    std::fill(g.begin(), g.end(), 0.0);
    return 3.0;
  };
  std::vector<double> p{1, 2, 3};
  EXPECT_EQ(grad_check(loss, p, 1e-5).max_rel_error, 0.0);
}

TEST(GradCheck, DetectsWrongGradient) {
  const LossFn loss = [](std::span<const double> p, std::span<double> g) {
    if (!g.empty()) g[0] = 3 * p[0];  // true derivative is 2 p
    return p[0] * p[0];
  };
  std::vector<double> p{1.0};
  EXPECT_GT(grad_check(loss, p, 1e-5).max_rel_error, 0.1);
}

TEST(GradCheck, NonFiniteLossThrows) {
  const LossFn loss = [](std::span<const double> p, std::span<double> g) {
    if (!g.empty()) g[0] = 1;
    return p[0] > 1.0 ? std::nan("") : p[0];
  };
  std::vector<double> p{1.0 - 1e-6};
  EXPECT_THROW(grad_check(loss, p, 1e-4), NumericError);
  EXPECT_THROW(grad_check(loss, p, 1.0), DomainError);
}

TEST(Tnsr, RoundTripsBothDtypes) {
  Rng rng(1);
  Tensor t({2, 3, 4});
  for (double& v : t.storage()) v = rng.normal();
  EXPECT_EQ(decode_tnsr(encode_tnsr(t, TnsrDtype::kF64)), t);
  const Tensor f = decode_tnsr(encode_tnsr(t, TnsrDtype::kF32));
  for (std::size_t i = 0; i < t.size(); ++i) EXPECT_EQ(f[i], static_cast<double>(static_cast<float>(t[i])));
}

TEST(Tnsr, HeaderLayout) {
  const auto bytes = encode_tnsr(Tensor({2}, std::vector<double>{1.0, 2.0}), TnsrDtype::kF32);
  ASSERT_EQ(bytes.size(), 4u + 1 + 1 + 8 + 2 * 4);
  EXPECT_EQ(bytes[0], 0x54);
  EXPECT_EQ(bytes[1], 0x4E);
  EXPECT_EQ(bytes[2], 0x53);
  EXPECT_EQ(bytes[3], 0x52);
  EXPECT_EQ(bytes[4], 0);  // f32
  EXPECT_EQ(bytes[5], 1);  // rank
  EXPECT_EQ(bytes[6], 2);  // dim 0, little-endian
  EXPECT_THROW(decode_tnsr(std::span(bytes).first(bytes.size() - 1)), FormatError);
}

TEST(TensorInvariant, ShapeMustMatchData) {
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
}
