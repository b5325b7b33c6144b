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

#ifndef EMBCODEC_BYTE_CODEC_HPP_
#define EMBCODEC_BYTE_CODEC_HPP_

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace embcodec {

/// Lossless general-purpose byte compressor used by the raw-data and
/// quantized-embedding baselines. Implementations are swappable so an
/// external codec can replace the built-in one without touching callers.
class ByteCompressor {
 public:
  virtual ~ByteCompressor() = default;
  virtual std::string name() const = 0;
  virtual std::vector<std::uint8_t> compress(std::span<const std::uint8_t> data) const = 0;
  /// Throws CorruptionError on streams it did not produce.
  virtual std::vector<std::uint8_t> decompress(std::span<const std::uint8_t> data) const = 0;
};

/// Order-0 adaptive arithmetic coder over bytes.
///
/// Frame: LEB128 original length, range-coded body, CRC-32 of the original
/// data (u32 little-endian). Symbol counts start at 1, grow by 32 per
/// occurrence and are halved once their total exceeds 2^16.
class AdaptiveByteCompressor final : public ByteCompressor {
 public:
  std::string name() const override { return "adaptive-order0"; }
  std::vector<std::uint8_t> compress(std::span<const std::uint8_t> data) const override;
  std::vector<std::uint8_t> decompress(std::span<const std::uint8_t> data) const override;
};

const ByteCompressor& default_byte_compressor();

std::vector<std::uint8_t> baseline_compress(std::span<const std::uint8_t> data);
std::vector<std::uint8_t> baseline_decompress(std::span<const std::uint8_t> data);

std::uint32_t crc32(std::span<const std::uint8_t> data);

}  // namespace embcodec

#endif  // EMBCODEC_BYTE_CODEC_HPP_
