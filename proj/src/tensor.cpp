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

#include "embcodec/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

#include "embcodec/binio.hpp"
#include "embcodec/error.hpp"

namespace embcodec {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(shape_product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != data_.size()) {
    throw DimensionError("tensor shape " + shape_string(shape_) + " does not match " +
                         std::to_string(data_.size()) + " elements");
  }
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t = matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

std::size_t Tensor::rows() const {
  if (shape_.size() != 2) throw DimensionError("expected a matrix, got " + shape_string(shape_));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (shape_.size() != 2) throw DimensionError("expected a matrix, got " + shape_string(shape_));
  return shape_[1];
}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const { return Tensor(std::move(shape), data_); }

Tensor Tensor::transposed() const {
  const std::size_t r = rows(), c = cols();
  Tensor out = matrix(c, r);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(j, i) = (*this)(i, j);
  return out;
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void ParamGrad::zero_grad() { std::fill(grad.storage().begin(), grad.storage().end(), 0.0); }

std::vector<std::uint8_t> encode_tnsr(const Tensor& t, TnsrDtype dtype) {
  ByteWriter w;
  w.raw("TNSR", 4);
  w.u8(static_cast<std::uint8_t>(dtype));
  if (t.rank() > 255) throw DimensionError("rank too large for TNSR");
  w.u8(static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.shape()) w.u64(d);
  for (double v : t.values()) {
    if (dtype == TnsrDtype::kF32)
      w.f32(static_cast<float>(v));
    else
      w.f64(v);
  }
  return w.take();
}

Tensor decode_tnsr(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  auto magic = r.bytes(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), "TNSR")) throw FormatError("magic", "not a TNSR file");
  const auto dtype = r.u8("dtype");
  if (dtype > 1) throw FormatError("dtype", "unknown dtype " + std::to_string(dtype));
  const auto rank = r.u8("rank");
  std::vector<std::size_t> shape(rank);
  for (auto& d : shape) d = r.u64("dims");
  const std::size_t n = shape_product(shape);
  const std::size_t width = dtype == 0 ? 4 : 8;
  if (n > r.remaining() / width) throw FormatError("payload", "truncated tensor payload");
  std::vector<double> data(n);
  for (auto& v : data) v = dtype == 0 ? static_cast<double>(r.f32("payload")) : r.f64("payload");
  if (r.remaining() != 0) throw FormatError("payload", "trailing bytes after tensor payload");
  return Tensor(std::move(shape), std::move(data));
}

void write_tnsr(const std::string& path, const Tensor& t, TnsrDtype dtype) {
  write_file(path, encode_tnsr(t, dtype));
}

Tensor read_tnsr(const std::string& path) { return decode_tnsr(read_file(path)); }

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace embcodec
