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

#ifndef EMBCODEC_KERNELS_HPP_
#define EMBCODEC_KERNELS_HPP_

#include <cstddef>
#include <span>

#include "embcodec/tensor.hpp"

namespace embcodec {

// Dense kernels used by the training paths. Every parallel kernel assigns
// each output element to exactly one thread and accumulates in a fixed order,
// so results are bit-identical to the serial reference for any thread count.
namespace kernels {

// C[m x n] (+)= A[m x k] * B[k x n]
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);
// C[k x n] (+)= A[m x k]^T * B[m x n]
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);
// C[m x k] (+)= A[m x n] * B[k x n]^T
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t n, std::size_t k, bool accumulate = false);

// Reference implementations: plain loops, no threading.
namespace serial {
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t n, std::size_t k, bool accumulate = false);
}  // namespace serial

}  // namespace kernels

/// Matrix product. Throws DimensionError when inner dimensions differ.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_serial(const Tensor& a, const Tensor& b);

enum class Unary { kSigmoid, kTanh, kSoftplus, kLog, kExp };

Tensor elementwise(Unary f, const Tensor& x);

double sigmoid(double x) noexcept;
// ln(1 + e^x) without overflow; returns x itself above 30.
double softplus(double x) noexcept;
// Inverse of softplus for y > 0.
double softplus_inverse(double y);

}  // namespace embcodec

#endif  // EMBCODEC_KERNELS_HPP_
