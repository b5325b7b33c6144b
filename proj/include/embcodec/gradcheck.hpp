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

#ifndef EMBCODEC_GRADCHECK_HPP_
#define EMBCODEC_GRADCHECK_HPP_

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace embcodec {

/// Scalar loss of a flat parameter vector. When `grad` is non-empty it has
/// the same length as `params` and the function must write the analytic
/// gradient into it; when empty only the value is needed.
///
/// grad_check calls the function concurrently from several threads, so it
/// must not mutate shared state.
using LossFn = std::function<double(std::span<const double> params, std::span<double> grad)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares the analytic gradient with a fourth-order central difference
/// (stencil at +-eps and +-2 eps). The per-coordinate error is
/// |g_a - g_fd| / max(1e-8, |g_a| + |g_fd|); the maximum is reported.
///
/// `indices` restricts the check to a subset of coordinates (all when empty).
/// Throws NumericError when any probe evaluates to a non-finite loss, and
/// DomainError when eps lies outside [1e-7, 1e-3].
GradCheckReport grad_check(const LossFn& loss, std::span<const double> params, double eps,
                           std::span<const std::size_t> indices = {});

GradCheckReport grad_check_serial(const LossFn& loss, std::span<const double> params, double eps,
                                  std::span<const std::size_t> indices = {});

}  // namespace embcodec

#endif  // EMBCODEC_GRADCHECK_HPP_
