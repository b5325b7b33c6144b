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

#include "embcodec/archive.hpp"

#include <algorithm>

#include "embcodec/binio.hpp"
#include "embcodec/byte_codec.hpp"
#include "embcodec/error.hpp"

namespace embcodec {
namespace {

constexpr char kMagic[4] = {'N', 'E', 'C', 'A'};

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void write_header(ByteWriter& w, const CompressedArchive& a) {
  w.raw(kMagic, 4);
  w.u8(kArchiveVersion);
  w.u8(static_cast<std::uint8_t>(a.mode));
  w.u16(a.channels);
  w.u32(a.tokens);
  std::visit(Overloaded{
                 [&](const NecHeader& h) {
                   if (a.mode != ArchiveMode::kNec) throw UsageError("NEC header on a non-NEC archive");
                   if (h.ranges.size() != a.channels) throw DimensionError("need one symbol range per channel");
                   w.u8(static_cast<std::uint8_t>(h.precision_bits));
                   for (const auto& r : h.ranges) {
                     w.i32(r.min);
                     w.i32(r.max);
                   }
                   if (h.tables) {
                     if (h.tables->channels.size() != a.channels) throw DimensionError("table count mismatch");
                     w.u8(1);
                     for (std::size_t c = 0; c < h.tables->channels.size(); ++c) {
                       const auto& t = h.tables->channels[c];
                       if (t.symbol_min != h.ranges[c].min || t.symbol_max != h.ranges[c].max)
                         throw DimensionError("embedded table range disagrees with header range");
                       for (auto f : t.freq) w.u32(f);
                     }
                   } else {
                     w.u8(0);
                     w.u64(h.model_id);
                   }
                 },
                 [&](const UqeHeader& h) {
                   if (a.mode != ArchiveMode::kUqe) throw UsageError("UQE header on a non-UQE archive");
                   w.u8(0);
                   w.u8(static_cast<std::uint8_t>(h.bits));
                   w.u8(h.constant ? 1 : 0);
                   w.f64(h.scale);
                   w.i32(h.zero_point);
                   w.f64(h.min);
                 },
                 [&](const RdcHeader& h) {
                   if (a.mode != ArchiveMode::kRdc) throw UsageError("RDC header on a non-RDC archive");
                   if (h.shape.size() > 255) throw DimensionError("rank too large");
                   w.u8(0);
                   w.u8(static_cast<std::uint8_t>(h.bit_depth));
                   w.u8(static_cast<std::uint8_t>(h.shape.size()));
                   for (auto d : h.shape) w.u32(d);
                 },
             },
             a.header);
  w.u64(a.payload.size());
}

}  // namespace

const char* mode_name(ArchiveMode mode) noexcept {
  switch (mode) {
    case ArchiveMode::kNec: return "NEC";
    case ArchiveMode::kUqe: return "UQE";
    case ArchiveMode::kRdc: return "RDC";
  }
  return "?";
}

std::size_t archive_header_size(const CompressedArchive& archive) {
  ByteWriter w;
  write_header(w, archive);
  return w.size();
}

std::vector<std::uint8_t> pack_archive(const CompressedArchive& archive) {
  ByteWriter w;
  write_header(w, archive);
  w.bytes(archive.payload);
  w.u32(crc32(w.data()));
  return w.take();
}

CompressedArchive unpack_archive(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  const auto magic = r.bytes(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), kMagic)) throw FormatError("magic", "not an embcodec archive");
  const auto version = r.u8("version");
  if (version != kArchiveVersion) throw FormatError("version", "unsupported archive version " + std::to_string(version));
  if (bytes.size() < 4 + 4) throw FormatError("checksum", "archive too short");
  const auto body = bytes.first(bytes.size() - 4);
  ByteReader tail(bytes.last(4));
  if (crc32(body) != tail.u32("checksum")) throw FormatError("checksum", "CRC-32 mismatch");

  CompressedArchive a;
  const auto mode = r.u8("mode");
  if (mode > 2) throw FormatError("mode", "unknown mode " + std::to_string(mode));
  a.mode = static_cast<ArchiveMode>(mode);
  a.channels = r.u16("channels");
  a.tokens = r.u32("tokens");
  const int precision = r.u8("precision_bits");
  switch (a.mode) {
    case ArchiveMode::kNec: {
      NecHeader h;
      h.precision_bits = precision;
      if (precision < 8 || precision > 16) throw FormatError("precision_bits", "must lie in [8, 16]");
      h.ranges.resize(a.channels);
      for (auto& range : h.ranges) {
        range.min = r.i32("symbol_min");
        range.max = r.i32("symbol_max");
        if (range.min > range.max || std::int64_t{range.max} - range.min + 1 > kMaxTableSymbols)
          throw FormatError("symbol_range", "invalid symbol range");
      }
      const auto kind = r.u8("tables_kind");
      if (kind == 1) {
        PMFTable tables;
        tables.precision_bits = precision;
        for (const auto& range : h.ranges) {
          ChannelTable t;
          t.symbol_min = range.min;
          t.symbol_max = range.max;
          const std::size_t slots = static_cast<std::size_t>(std::int64_t{range.max} - range.min + 2);
          if (slots * 4 > r.remaining()) throw FormatError("frequencies", "truncated table");
          t.freq.resize(slots);
          for (auto& f : t.freq) f = r.u32("frequencies");
          finalize_table(t, precision);
          tables.channels.push_back(std::move(t));
        }
        h.tables = std::move(tables);
      } else if (kind == 0) {
        h.model_id = r.u64("model_id");
      } else {
        throw FormatError("tables_kind", "unknown table kind");
      }
      a.header = std::move(h);
      break;
    }
    case ArchiveMode::kUqe: {
      UqeHeader h;
      h.bits = r.u8("bits");
      if (!((h.bits >= 2 && h.bits <= 8) || h.bits == 16 || h.bits == 32)) throw FormatError("bits", "invalid bit width");
      h.constant = r.u8("flags") & 1;
      h.scale = r.f64("scale");
      h.zero_point = r.i32("zero_point");
      h.min = r.f64("min");
      a.header = h;
      break;
    }
    case ArchiveMode::kRdc: {
      RdcHeader h;
      h.bit_depth = r.u8("bit_depth");
      if (h.bit_depth != 8 && h.bit_depth != 16) throw FormatError("bit_depth", "must be 8 or 16");
      h.shape.resize(r.u8("rank"));
      for (auto& d : h.shape) d = r.u32("shape");
      a.header = std::move(h);
      break;
    }
  }
  const std::uint64_t len = r.u64("payload_len");
  if (len != r.remaining() - 4) throw FormatError("payload_len", "does not match the archive size");
  const auto payload = r.bytes(static_cast<std::size_t>(len), "payload");
  a.payload.assign(payload.begin(), payload.end());
  return a;
}

}  // namespace embcodec
