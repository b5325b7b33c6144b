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

#ifndef EMBCODEC_ARCHIVE_HPP_
#define EMBCODEC_ARCHIVE_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "embcodec/entropy_model.hpp"

namespace embcodec {

enum class ArchiveMode : std::uint8_t { kNec = 0, kUqe = 1, kRdc = 2 };

const char* mode_name(ArchiveMode mode) noexcept;

/// Learned-prior payload: per-channel symbol ranges, and either the
/// frequency tables themselves or the id of the density blob they are built
/// from.
struct NecHeader {
  int precision_bits = 16;
  std::vector<SymbolRange> ranges;
  std::optional<PMFTable> tables;  // set when tables are embedded
  std::uint64_t model_id = 0;      // used when tables are not embedded
  friend bool operator==(const NecHeader&, const NecHeader&) = default;
};

/// Affine-quantized embedding. bits is 2..8 for integer codes, 16 or 32 for
/// float storage. `constant` marks a constant tensor whose value is `min`.
struct UqeHeader {
  int bits = 8;
  bool constant = false;
  double scale = 0.0;
  std::int32_t zero_point = 0;
  double min = 0.0;
  friend bool operator==(const UqeHeader&, const UqeHeader&) = default;
};

/// Raw data at a given bit depth with its original shape.
struct RdcHeader {
  int bit_depth = 8;
  std::vector<std::uint32_t> shape;
  friend bool operator==(const RdcHeader&, const RdcHeader&) = default;
};

/// Self-describing container; see docs/format.md for the byte layout.
struct CompressedArchive {
  ArchiveMode mode = ArchiveMode::kNec;
  std::uint16_t channels = 0;
  std::uint32_t tokens = 0;
  std::variant<NecHeader, UqeHeader, RdcHeader> header;
  std::vector<std::uint8_t> payload;
  friend bool operator==(const CompressedArchive&, const CompressedArchive&) = default;
};

constexpr std::uint8_t kArchiveVersion = 1;

std::vector<std::uint8_t> pack_archive(const CompressedArchive& archive);
/// Validates magic, version, checksum and payload length, in that order,
/// raising FormatError with the failing field's name.
CompressedArchive unpack_archive(std::span<const std::uint8_t> bytes);

/// Bytes preceding the payload (everything but payload and CRC trailer).
std::size_t archive_header_size(const CompressedArchive& archive);

}  // namespace embcodec

#endif  // EMBCODEC_ARCHIVE_HPP_
