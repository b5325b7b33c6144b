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

#include "embcodec/range_coder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "embcodec/error.hpp"

namespace embcodec {
namespace {
constexpr std::uint32_t kTop = 1u << 24;
}

void RangeEncoder::emit(std::uint8_t b) {
  if (!skipped_lead_) {
    // The first byte of this construction is always zero.
    if (b != 0) throw std::logic_error("range coder carried into the leading byte");
    skipped_lead_ = true;
    return;
  }
  out_.push_back(b);
}

void RangeEncoder::shift_low() {
  if (static_cast<std::uint32_t>(low_) < 0xFF000000u || (low_ >> 32) != 0) {
    const auto carry = static_cast<std::uint8_t>(low_ >> 32);
    std::uint8_t temp = cache_;
    do {
      emit(static_cast<std::uint8_t>(temp + carry));
      temp = 0xFF;
    } while (--cache_size_ != 0);
    cache_ = static_cast<std::uint8_t>(low_ >> 24);
  }
  ++cache_size_;
  low_ = (low_ & 0x00FFFFFFu) << 8;
}

void RangeEncoder::encode(std::uint32_t start, std::uint32_t size, std::uint32_t total) {
  const std::uint32_t r = range_ / total;
  low_ += static_cast<std::uint64_t>(r) * start;
  range_ = r * size;
  while (range_ < kTop) {
    range_ <<= 8;
    shift_low();
  }
}

void RangeEncoder::encode_shift(std::uint32_t start, std::uint32_t size, int bits) {
  const std::uint32_t r = range_ >> bits;
  low_ += static_cast<std::uint64_t>(r) * start;
  range_ = r * size;
  while (range_ < kTop) {
    range_ <<= 8;
    shift_low();
  }
}

std::vector<std::uint8_t> RangeEncoder::finish() {
  // Any value in [low, low + range) identifies the stream; pick the one with
  // the low 24 bits clear so that only its top byte needs to be written.
  low_ = (low_ + (kTop - 1)) & ~static_cast<std::uint64_t>(kTop - 1);
  shift_low();
  shift_low();
  while (!out_.empty() && out_.back() == 0) out_.pop_back();
  return std::move(out_);
}

RangeDecoder::RangeDecoder(std::span<const std::uint8_t> data) : data_(data) {
  for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
}

std::uint8_t RangeDecoder::next_byte() {
  const std::size_t p = pos_++;
  return p < data_.size() ? data_[p] : 0;
}

void RangeDecoder::normalize() {
  while (range_ < kTop) {
    code_ = (code_ << 8) | next_byte();
    range_ <<= 8;
  }
}

std::uint32_t RangeDecoder::peek(std::uint32_t total) {
  step_ = range_ / total;
  const std::uint32_t v = code_ / step_;
  if (v >= total) throw CorruptionError("range decoder left the coding interval");
  return v;
}

std::uint32_t RangeDecoder::peek_shift(int bits) {
  step_ = range_ >> bits;
  const std::uint32_t v = code_ / step_;
  if (v >= (1u << bits)) throw CorruptionError("range decoder left the coding interval");
  return v;
}

void RangeDecoder::consume(std::uint32_t start, std::uint32_t size) {
  code_ -= start * step_;
  range_ = step_ * size;
  normalize();
}

std::uint32_t RangeDecoder::decode_bits(int bits) {
  const std::uint32_t v = peek_shift(bits);
  consume(v, 1);
  return v;
}

namespace {

void check_tables(const PMFTable& tables, std::size_t e) {
  if (tables.channels.size() != e)
    throw DimensionError("tables cover " + std::to_string(tables.channels.size()) + " channels, grid has " +
                         std::to_string(e));
  if (tables.precision_bits < 8 || tables.precision_bits > 16) throw RangeError("precision_bits must lie in [8, 16]");
}

}  // namespace

std::vector<std::uint8_t> range_encode(const QuantizedEmbedding& q, const PMFTable& tables) {
  check_tables(tables, q.channels);
  const int bits = tables.precision_bits;
  RangeEncoder enc;
  for (std::size_t c = 0; c < q.channels; ++c) {
    const ChannelTable& t = tables.channels[c];
    for (std::size_t j = 0; j < q.tokens; ++j) {
      const std::int32_t s = q.at(c, j);
      if (s >= t.symbol_min && s <= t.symbol_max) {
        const auto idx = static_cast<std::size_t>(std::int64_t{s} - t.symbol_min);
        enc.encode_shift(t.cumulative[idx], t.freq[idx], bits);
      } else {
        const std::size_t esc = t.escape_index();
        enc.encode_shift(t.cumulative[esc], t.freq[esc], bits);
        const auto raw = static_cast<std::uint32_t>(s);
        enc.encode_bits(raw >> 16, 16);
        enc.encode_bits(raw & 0xFFFFu, 16);
      }
    }
  }
  return enc.finish();
}

QuantizedEmbedding range_decode(std::span<const std::uint8_t> payload, const PMFTable& tables, std::size_t e,
                                std::size_t n) {
  check_tables(tables, e);
  const int bits = tables.precision_bits;
  RangeDecoder dec(payload);
  QuantizedEmbedding q(e, n);
  for (std::size_t c = 0; c < e; ++c) {
    const ChannelTable& t = tables.channels[c];
    for (std::size_t j = 0; j < n; ++j) {
      const std::uint32_t target = dec.peek_shift(bits);
      const auto it = std::upper_bound(t.cumulative.begin(), t.cumulative.end(), target);
      const auto idx = static_cast<std::size_t>(it - t.cumulative.begin()) - 1;
      dec.consume(t.cumulative[idx], t.freq[idx]);
      if (idx == t.escape_index()) {
        const std::uint32_t hi = dec.decode_bits(16);
        const std::uint32_t lo = dec.decode_bits(16);
        const auto s = static_cast<std::int32_t>((hi << 16) | lo);
        if (s >= t.symbol_min && s <= t.symbol_max) throw CorruptionError("escaped symbol lies inside the table range");
        q.at(c, j) = s;
      } else {
        q.at(c, j) = static_cast<std::int32_t>(t.symbol_min + static_cast<std::int64_t>(idx));
      }
    }
  }
  if (!dec.exhausted()) throw CorruptionError("payload has bytes beyond the coded symbols");
  return q;
}

double ideal_code_bits(const QuantizedEmbedding& q, const PMFTable& tables) {
  check_tables(tables, q.channels);
  const double total = std::ldexp(1.0, tables.precision_bits);
  double bits = 0.0;
  for (std::size_t c = 0; c < q.channels; ++c) {
    const ChannelTable& t = tables.channels[c];
    for (std::size_t j = 0; j < q.tokens; ++j) {
      const std::int32_t s = q.at(c, j);
      if (s >= t.symbol_min && s <= t.symbol_max) {
        bits -= std::log2(t.freq[static_cast<std::size_t>(std::int64_t{s} - t.symbol_min)] / total);
      } else {
        bits -= std::log2(t.freq[t.escape_index()] / total);
        bits += 32.0;
      }
    }
  }
  return bits;
}

}  // namespace embcodec
