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

#include "embcodec/byte_codec.hpp"

#include <algorithm>
#include <array>

#include <zlib.h>

#include "embcodec/binio.hpp"
#include "embcodec/error.hpp"
#include "embcodec/range_coder.hpp"

namespace embcodec {

std::uint32_t crc32(std::span<const std::uint8_t> data) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  std::size_t off = 0;
  while (off < data.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(data.size() - off, 1u << 30));
    crc = ::crc32(crc, data.data() + off, chunk);
    off += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

namespace {

constexpr std::uint32_t kIncrement = 32;
constexpr std::uint32_t kMaxTotal = 1u << 16;
constexpr std::uint64_t kMaxLength = std::uint64_t{1} << 40;

class AdaptiveModel {
 public:
  AdaptiveModel() { freq_.fill(1); }

  std::uint32_t total() const noexcept { return total_; }
  std::uint32_t start(int s) const noexcept {
    std::uint32_t c = 0;
    for (int i = 0; i < s; ++i) c += freq_[i];
    return c;
  }
  std::uint32_t freq(int s) const noexcept { return freq_[s]; }

  // Symbol whose interval contains `target`, with its start.
  int find(std::uint32_t target, std::uint32_t& start) const noexcept {
    std::uint32_t c = 0;
    int s = 0;
    while (c + freq_[s] <= target) c += freq_[s++];
    start = c;
    return s;
  }

  void update(int s) {
    freq_[s] += kIncrement;
    total_ += kIncrement;
    if (total_ > kMaxTotal) {
      total_ = 0;
      for (auto& f : freq_) {
        f = (f + 1) / 2;
        total_ += f;
      }
    }
  }

 private:
  std::array<std::uint32_t, 256> freq_{};
  std::uint32_t total_ = 256;
};

void put_varint(std::vector<std::uint8_t>& out, std::uint64_t v) {
  while (v >= 0x80) {
    out.push_back(static_cast<std::uint8_t>(v | 0x80));
    v >>= 7;
  }
  out.push_back(static_cast<std::uint8_t>(v));
}

std::uint64_t get_varint(std::span<const std::uint8_t> in, std::size_t& pos) {
  std::uint64_t v = 0;
  for (int shift = 0; shift < 64; shift += 7) {
    if (pos >= in.size()) throw CorruptionError("truncated length prefix");
    const std::uint8_t b = in[pos++];
    v |= static_cast<std::uint64_t>(b & 0x7F) << shift;
    if (!(b & 0x80)) return v;
  }
  throw CorruptionError("malformed length prefix");
}

}  // namespace

std::vector<std::uint8_t> AdaptiveByteCompressor::compress(std::span<const std::uint8_t> data) const {
  AdaptiveModel model;
  RangeEncoder enc;
  for (std::uint8_t b : data) {
    enc.encode(model.start(b), model.freq(b), model.total());
    model.update(b);
  }
  std::vector<std::uint8_t> out;
  put_varint(out, data.size());
  const auto body = enc.finish();
  out.insert(out.end(), body.begin(), body.end());
  ByteWriter w;
  w.u32(crc32(data));
  out.insert(out.end(), w.data().begin(), w.data().end());
  return out;
}

std::vector<std::uint8_t> AdaptiveByteCompressor::decompress(std::span<const std::uint8_t> data) const {
  std::size_t pos = 0;
  const std::uint64_t length = get_varint(data, pos);
  if (length > kMaxLength) throw CorruptionError("implausible decompressed length");
  if (data.size() < pos + 4) throw CorruptionError("stream too short for its checksum");
  const auto body = data.subspan(pos, data.size() - pos - 4);
  ByteReader tail(data.subspan(data.size() - 4));
  const std::uint32_t expected = tail.u32("checksum");

  AdaptiveModel model;
  RangeDecoder dec(body);
  std::vector<std::uint8_t> out;
  out.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(length, 1u << 26)));
  for (std::uint64_t i = 0; i < length; ++i) {
    std::uint32_t start = 0;
    const int s = model.find(dec.peek(model.total()), start);
    dec.consume(start, model.freq(s));
    model.update(s);
    out.push_back(static_cast<std::uint8_t>(s));
    // A corrupt length would otherwise have us decode zeros for a long time.
    if (dec.consumed() == body.size() && i > 4096 * (body.size() + 64) + (1u << 20)) break;
  }
  if (out.size() != length || dec.consumed() < body.size()) throw CorruptionError("byte stream does not match its frame");
  if (crc32(out) != expected) throw CorruptionError("byte stream checksum mismatch");
  return out;
}

const ByteCompressor& default_byte_compressor() {
  static const AdaptiveByteCompressor instance;
  return instance;
}

std::vector<std::uint8_t> baseline_compress(std::span<const std::uint8_t> data) {
  return default_byte_compressor().compress(data);
}

std::vector<std::uint8_t> baseline_decompress(std::span<const std::uint8_t> data) {
  return default_byte_compressor().decompress(data);
}

}  // namespace embcodec
