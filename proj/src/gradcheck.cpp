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

#include "embcodec/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "embcodec/error.hpp"

namespace embcodec {
namespace {

double probe(const LossFn& loss, std::vector<double>& p, std::size_t i, double base, double delta) {
  p[i] = base + delta;
  const double v = loss(p, {});
  p[i] = base;
  if (!std::isfinite(v)) throw NumericError("non-finite loss while probing coordinate " + std::to_string(i));
  return v;
}

double numeric_derivative(const LossFn& loss, std::vector<double>& p, std::size_t i, double eps) {
  const double base = p[i];
  const double f1 = probe(loss, p, i, base, eps);
  const double fm1 = probe(loss, p, i, base, -eps);
  const double f2 = probe(loss, p, i, base, 2 * eps);
  const double fm2 = probe(loss, p, i, base, -2 * eps);
  return (8.0 * (f1 - fm1) - (f2 - fm2)) / (12.0 * eps);
}

double relative_error(double a, double n) {
  return std::abs(a - n) / std::max(1e-8, std::abs(a) + std::abs(n));
}

struct Prepared {
  std::vector<double> analytic;
  std::vector<std::size_t> indices;
};

Prepared prepare(const LossFn& loss, std::span<const double> params, double eps,
                 std::span<const std::size_t> indices) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) throw DomainError("grad_check eps must lie in [1e-7, 1e-3]");
  Prepared out;
  out.analytic.assign(params.size(), 0.0);
  const double v = loss(params, out.analytic);
  if (!std::isfinite(v)) throw NumericError("non-finite loss at the base point");
  if (indices.empty()) {
    out.indices.resize(params.size());
    std::iota(out.indices.begin(), out.indices.end(), std::size_t{0});
  } else {
    out.indices.assign(indices.begin(), indices.end());
  }
  for (auto i : out.indices)
    if (i >= params.size()) throw IndexError("grad_check index out of range");
  return out;
}

GradCheckReport reduce(const Prepared& prep, const std::vector<double>& numeric) {
  GradCheckReport r;
  for (std::size_t j = 0; j < prep.indices.size(); ++j) {
    const std::size_t i = prep.indices[j];
    const double e = relative_error(prep.analytic[i], numeric[j]);
    if (e > r.max_rel_error) r = {e, i, prep.analytic[i], numeric[j]};
  }
  return r;
}

}  // namespace

GradCheckReport grad_check(const LossFn& loss, std::span<const double> params, double eps,
                           std::span<const std::size_t> indices) {
  const Prepared prep = prepare(loss, params, eps, indices);
  std::vector<double> numeric(prep.indices.size());
  const long count = static_cast<long>(prep.indices.size());
  bool failed = false;
  std::string message;
#pragma omp parallel
  {
    std::vector<double> p(params.begin(), params.end());
#pragma omp for schedule(dynamic, 16)
    for (long j = 0; j < count; ++j) {
      try {
        numeric[j] = numeric_derivative(loss, p, prep.indices[j], eps);
      } catch (const NumericError& e) {
#pragma omp critical
        {
          failed = true;
          message = e.what();
        }
      }
    }
  }
  if (failed) throw NumericError(message);
  return reduce(prep, numeric);
}

GradCheckReport grad_check_serial(const LossFn& loss, std::span<const double> params, double eps,
                                  std::span<const std::size_t> indices) {
  const Prepared prep = prepare(loss, params, eps, indices);
  std::vector<double> numeric(prep.indices.size());
  std::vector<double> p(params.begin(), params.end());
  for (std::size_t j = 0; j < prep.indices.size(); ++j)
    numeric[j] = numeric_derivative(loss, p, prep.indices[j], eps);
  return reduce(prep, numeric);
}

}  // namespace embcodec
