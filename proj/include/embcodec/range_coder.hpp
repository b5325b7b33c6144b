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

#ifndef EMBCODEC_RANGE_CODER_HPP_
#define EMBCODEC_RANGE_CODER_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "embcodec/entropy_model.hpp"
#include "embcodec/quantizer.hpp"

namespace embcodec {

/// Byte-oriented range encoder: 33-bit low with carry propagation, 32-bit
/// range renormalized whenever it drops below 2^24. All state is integer, so
/// output is identical on every platform.
///
/// The always-zero leading byte of this construction is not emitted, and the
/// flush writes only as many bytes as are needed to pin a value inside the
/// final interval. Trailing zero bytes are dropped; the decoder reads zeros
/// past the end of its input.
class RangeEncoder {
 public:
  /// Codes the interval [start, start + size) out of `total`.
  void encode(std::uint32_t start, std::uint32_t size, std::uint32_t total);
  /// Same with total = 2^bits.
  void encode_shift(std::uint32_t start, std::uint32_t size, int bits);
  /// Appends `bits` (<= 16) raw bits at uniform probability.
  void encode_bits(std::uint32_t value, int bits) { encode_shift(value, 1, bits); }

  std::vector<std::uint8_t> finish();

 private:
  void shift_low();
  void emit(std::uint8_t b);

  std::uint64_t low_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint8_t cache_ = 0;
  std::uint64_t cache_size_ = 1;
  bool skipped_lead_ = false;
  std::vector<std::uint8_t> out_;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(std::span<const std::uint8_t> data);

  /// Returns the target value in [0, total) for the next symbol; must be
  /// followed by `consume` with the chosen symbol's interval.
  std::uint32_t peek(std::uint32_t total);
  std::uint32_t peek_shift(int bits);
  void consume(std::uint32_t start, std::uint32_t size);
  std::uint32_t decode_bits(int bits);

  /// Bytes actually taken from the input (reads past the end are not counted).
  std::size_t consumed() const noexcept { return std::min(pos_, data_.size()); }
  std::size_t input_size() const noexcept { return data_.size(); }
  /// True when the input holds no bytes beyond what a well-formed stream of
  /// the symbols decoded so far can contain. The flush leaves the last three
  /// bytes of the decoder window zero, so they are never stored.
  bool exhausted() const noexcept { return data_.size() + 3 <= pos_; }

 private:
  std::uint8_t next_byte();
  void normalize();

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
  std::uint32_t code_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint32_t step_ = 0;
};

/// Codes q row by row (channel 0 tokens first) against per-channel static
/// tables. Symbols outside a channel's table go through the escape slot and
/// are followed by their raw 32-bit value.
std::vector<std::uint8_t> range_encode(const QuantizedEmbedding& q, const PMFTable& tables);

/// Inverse of range_encode. Throws CorruptionError when the payload holds
/// bytes that the symbol stream never consumed or decodes to an inconsistent
/// state. A table mismatch is generally not detectable here; archives carry a
/// CRC for that.
QuantizedEmbedding range_decode(std::span<const std::uint8_t> payload, const PMFTable& tables, std::size_t e,
                                std::size_t n);

/// Ideal code length in bits of q under the tables, -sum log2(freq / 2^P),
/// including 32 raw bits per escaped symbol.
double ideal_code_bits(const QuantizedEmbedding& q, const PMFTable& tables);

}  // namespace embcodec

#endif  // EMBCODEC_RANGE_CODER_HPP_
