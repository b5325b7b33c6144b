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

#include "embcodec/kernels.hpp"

#include <algorithm>
#include <cmath>

#include "embcodec/error.hpp"

namespace embcodec {
namespace kernels {
namespace {

// Below this many multiply-adds the fork/join cost dominates.
constexpr std::size_t kParallelWork = 1u << 15;

inline void check(std::span<const double> a, std::size_t an, std::span<const double> b,
                  std::size_t bn, std::span<double> c, std::size_t cn) {
  if (a.size() < an || b.size() < bn || c.size() < cn) throw DimensionError("gemm operand too small");
}

}  // namespace

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  check(a, m * k, b, k * n, c, m * n);
  const double* A = a.data();
  const double* B = b.data();
  double* C = c.data();
  const long rows = static_cast<long>(m);
#pragma omp parallel for schedule(static) if (m * k * n > kParallelWork)
  for (long i = 0; i < rows; ++i) {
    double* crow = C + i * n;
    if (!accumulate) std::fill(crow, crow + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      const double* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  check(a, m * k, b, m * n, c, k * n);
  const double* A = a.data();
  const double* B = b.data();
  double* C = c.data();
  const long rows = static_cast<long>(k);
#pragma omp parallel for schedule(static) if (m * k * n > kParallelWork)
  for (long p = 0; p < rows; ++p) {
    double* crow = C + p * n;
    if (!accumulate) std::fill(crow, crow + n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      const double av = A[i * k + p];
      const double* brow = B + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t n, std::size_t k, bool accumulate) {
  check(a, m * n, b, k * n, c, m * k);
  const double* A = a.data();
  const double* B = b.data();
  double* C = c.data();
  const long rows = static_cast<long>(m);
#pragma omp parallel for schedule(static) if (m * k * n > kParallelWork)
  for (long i = 0; i < rows; ++i) {
    const double* arow = A + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = B + p * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += arow[j] * brow[j];
      if (accumulate)
        C[i * k + p] += s;
      else
        C[i * k + p] = s;
    }
  }
}

namespace serial {

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  check(a, m * k, b, k * n, c, m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = accumulate ? c[i * n + j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = s;
    }
  }
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  check(a, m * k, b, m * n, c, k * n);
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = accumulate ? c[p * n + j] : 0.0;
      for (std::size_t i = 0; i < m; ++i) s += a[i * k + p] * b[i * n + j];
      c[p * n + j] = s;
    }
  }
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t n, std::size_t k, bool accumulate) {
  check(a, m * n, b, k * n, c, m * k);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += a[i * n + j] * b[p * n + j];
      c[i * k + p] = accumulate ? c[i * k + p] + s : s;
    }
  }
}

}  // namespace serial
}  // namespace kernels

namespace {

void check_matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw DimensionError("matmul " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_matmul(a, b);
  Tensor c = Tensor::matrix(a.rows(), b.cols());
  kernels::gemm_nn(a.values(), b.values(), c.values(), a.rows(), a.cols(), b.cols());
  return c;
}

Tensor matmul_serial(const Tensor& a, const Tensor& b) {
  check_matmul(a, b);
  Tensor c = Tensor::matrix(a.rows(), b.cols());
  kernels::serial::gemm_nn(a.values(), b.values(), c.values(), a.rows(), a.cols(), b.cols());
  return c;
}

double sigmoid(double x) noexcept {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) noexcept {
  if (x > 30.0) return x;
  return std::log1p(std::exp(x));
}

double softplus_inverse(double y) {
  if (!(y > 0)) throw DomainError("softplus_inverse requires a positive argument");
  if (y > 30.0) return y;
  return std::log(std::expm1(y));
}

Tensor elementwise(Unary f, const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    switch (f) {
      case Unary::kSigmoid: out[i] = sigmoid(v); break;
      case Unary::kTanh: out[i] = std::tanh(v); break;
      case Unary::kSoftplus: out[i] = softplus(v); break;
      case Unary::kExp: out[i] = std::exp(v); break;
      case Unary::kLog:
        if (!(v > 0)) throw DomainError("log of non-positive value " + std::to_string(v));
        out[i] = std::log(v);
        break;
    }
  }
  return out;
}

}  // namespace embcodec
