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

#ifndef EMBCODEC_TENSOR_HPP_
#define EMBCODEC_TENSOR_HPP_

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace embcodec {

/// Dense row-major array of doubles with shape metadata.
///
/// The element count always equals the product of the dimensions. A tensor
/// with an empty shape is a scalar holding one element.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
    return Tensor({rows, cols}, fill);
  }
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor identity(std::size_t n);

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const noexcept { return data_.size(); }

  // 2-D accessors; the tensor must have rank 2.
  std::size_t rows() const;
  std::size_t cols() const;
  double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  std::vector<double>& storage() noexcept { return data_; }

  Tensor reshaped(std::vector<std::size_t> shape) const;
  Tensor transposed() const;
  bool all_finite() const noexcept;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

/// A trainable parameter together with its gradient accumulator.
struct ParamGrad {
  Tensor value;
  Tensor grad;

  explicit ParamGrad(Tensor v) : value(std::move(v)), grad(value.shape()) {}
  void zero_grad();
};

std::size_t shape_product(const std::vector<std::size_t>& shape);
std::string shape_string(const std::vector<std::size_t>& shape);

// TNSR raw tensor files: magic "TNSR", u8 dtype (0 = f32, 1 = f64), u8 rank,
// rank x u64 dims, row-major little-endian payload.
enum class TnsrDtype : std::uint8_t { kF32 = 0, kF64 = 1 };

std::vector<std::uint8_t> encode_tnsr(const Tensor& t, TnsrDtype dtype);
Tensor decode_tnsr(std::span<const std::uint8_t> bytes);
void write_tnsr(const std::string& path, const Tensor& t, TnsrDtype dtype = TnsrDtype::kF32);
Tensor read_tnsr(const std::string& path);

}  // namespace embcodec

#endif  // EMBCODEC_TENSOR_HPP_
