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

#include "embcodec/pipeline.hpp"

#include <cmath>

#include <fmt/format.h>

#include "embcodec/binio.hpp"
#include "embcodec/byte_codec.hpp"
#include "embcodec/error.hpp"
#include "embcodec/range_coder.hpp"

namespace embcodec {
namespace {

void check_embedding(const Tensor& y) {
  if (y.rank() != 2) throw DimensionError(fmt::format("embedding must be e x n, got {}", shape_string(y.shape())));
  if (y.rows() == 0 || y.cols() == 0) throw DimensionError("empty embedding");
  if (y.rows() > 0xFFFF) throw DimensionError("too many channels for the archive header");
  if (y.cols() > 0xFFFFFFFFull) throw DimensionError("too many tokens for the archive header");
}

}  // namespace

NecCodec NecCodec::build(const FactorizedDensity& density, int precision_bits,
                         std::optional<std::vector<SymbolRange>> ranges) {
  NecCodec c;
  c.density = density;
  c.ranges = ranges ? std::move(*ranges) : symbol_ranges_from_density(density);
  if (c.ranges.size() != static_cast<std::size_t>(density.channels())) {
    throw DimensionError("need one symbol range per density channel");
  }
  c.tables = build_pmf_tables(density, c.ranges, precision_bits);
  c.blob = encode_density(density, c.ranges);
  c.model_id = fnv1a64(c.blob);
  return c;
}

NecCodec NecCodec::from_blob(std::span<const std::uint8_t> blob, int precision_bits) {
  DensityBlob d = decode_density(blob);
  if (!d.ranges) throw FormatError("ranges", "density blob carries no symbol ranges");
  NecCodec c = build(d.model, precision_bits, std::move(d.ranges));
  // Keep the id of the bytes we were given.
  c.blob.assign(blob.begin(), blob.end());
  c.model_id = fnv1a64(c.blob);
  return c;
}

CompressedArchive nec_compress(const Tensor& y, const NecCodec& codec, bool embed_tables) {
  check_embedding(y);
  if (y.rows() != codec.tables.channels.size()) {
    throw DimensionError(fmt::format("embedding has {} channels, density has {}", y.rows(),
                                     codec.tables.channels.size()));
  }
  const QuantizedEmbedding q = round_quantize(y);
  CompressedArchive a;
  a.mode = ArchiveMode::kNec;
  a.channels = static_cast<std::uint16_t>(q.channels);
  a.tokens = static_cast<std::uint32_t>(q.tokens);
  NecHeader h;
  h.precision_bits = codec.tables.precision_bits;
  h.ranges = codec.ranges;
  if (embed_tables) {
    h.tables = codec.tables;
  } else {
    h.model_id = codec.model_id;
  }
  a.header = std::move(h);
  a.payload = range_encode(q, codec.tables);
  return a;
}

QuantizedEmbedding nec_decompress(const CompressedArchive& archive, const NecCodec* codec) {
  if (archive.mode != ArchiveMode::kNec) throw UsageError("not a NEC archive");
  const auto& h = std::get<NecHeader>(archive.header);
  if (h.tables) return range_decode(archive.payload, *h.tables, archive.channels, archive.tokens);
  if (codec == nullptr) throw UsageError("archive references a density blob; pass --density");
  if (codec->model_id != h.model_id) {
    throw FormatError("model_id", fmt::format("archive wants model {:016x}, density blob is {:016x}", h.model_id,
                                              codec->model_id));
  }
  if (codec->tables.precision_bits == h.precision_bits) {
    return range_decode(archive.payload, codec->tables, archive.channels, archive.tokens);
  }
  const PMFTable tables = build_pmf_tables(codec->density, h.ranges, h.precision_bits);
  return range_decode(archive.payload, tables, archive.channels, archive.tokens);
}

CompressedArchive uqe_compress(const Tensor& y, int bits) {
  check_embedding(y);
  CompressedArchive a;
  a.mode = ArchiveMode::kUqe;
  a.channels = static_cast<std::uint16_t>(y.rows());
  a.tokens = static_cast<std::uint32_t>(y.cols());
  UqeHeader h;
  h.bits = bits;
  std::vector<std::uint8_t> raw;
  if (bits == 16 || bits == 32) {
    ByteWriter w;
    for (double v : y.values()) {
      if (bits == 16) {
        w.u16(float_to_half(static_cast<float>(v)));
      } else {
        w.f32(static_cast<float>(v));
      }
    }
    raw = w.take();
  } else {
    try {
      const AffineQuantized aq = affine_quantize(y, bits);
      h.scale = aq.params.scale;
      h.zero_point = aq.params.zero_point;
      h.min = aq.params.min;
      raw = pack_codes(aq.codes, bits);
    } catch (const DegenerateInputError&) {
      h.constant = true;
      h.min = y[0];
    }
  }
  a.header = h;
  if (!h.constant) a.payload = baseline_compress(raw);
  return a;
}

Tensor uqe_decompress(const CompressedArchive& archive) {
  if (archive.mode != ArchiveMode::kUqe) throw UsageError("not a UQE archive");
  const auto& h = std::get<UqeHeader>(archive.header);
  const std::vector<std::size_t> shape{archive.channels, archive.tokens};
  const std::size_t count = shape_product(shape);
  if (h.constant) {
    if (!archive.payload.empty()) throw FormatError("payload", "constant marker with a payload");
    return Tensor(shape, h.min);
  }
  const std::vector<std::uint8_t> raw = baseline_decompress(archive.payload);
  if (h.bits == 16 || h.bits == 32) {
    const std::size_t width = static_cast<std::size_t>(h.bits / 8);
    if (raw.size() != count * width) throw FormatError("payload", "float payload has the wrong length");
    ByteReader r(raw);
    Tensor out(shape);
    for (std::size_t i = 0; i < count; ++i) {
      out[i] = h.bits == 16 ? static_cast<double>(half_to_float(r.u16("payload"))) : r.f32("payload");
    }
    return out;
  }
  if (raw.size() != (count * static_cast<std::size_t>(h.bits) + 7) / 8) {
    throw FormatError("payload", "code payload has the wrong length");
  }
  AffineQuantParams p;
  p.bits = h.bits;
  p.scale = h.scale;
  p.min = h.min;
  p.zero_point = h.zero_point;
  return affine_dequantize(unpack_codes(raw, h.bits, count), p, shape);
}

CompressedArchive rdc_compress(const Tensor& image, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) throw DomainError("RDC bit depth must be 8 or 16");
  if (image.size() == 0) throw DimensionError("empty image");
  const double top = bit_depth == 8 ? 255.0 : 65535.0;
  ByteWriter w;
  for (double v : image.values()) {
    if (!(v >= 0.0 && v <= 1.0)) throw RangeError(fmt::format("RDC expects pixels in [0, 1], got {}", v));
    const auto code = static_cast<std::uint32_t>(round_half_away(v * top));
    if (bit_depth == 8) {
      w.u8(static_cast<std::uint8_t>(code));
    } else {
      w.u16(static_cast<std::uint16_t>(code));
    }
  }
  CompressedArchive a;
  a.mode = ArchiveMode::kRdc;
  RdcHeader h;
  h.bit_depth = bit_depth;
  for (auto d : image.shape()) h.shape.push_back(static_cast<std::uint32_t>(d));
  a.header = std::move(h);
  a.payload = baseline_compress(w.data());
  return a;
}

Tensor rdc_decompress(const CompressedArchive& archive) {
  if (archive.mode != ArchiveMode::kRdc) throw UsageError("not an RDC archive");
  const auto& h = std::get<RdcHeader>(archive.header);
  std::vector<std::size_t> shape(h.shape.begin(), h.shape.end());
  const std::size_t count = shape_product(shape);
  const std::vector<std::uint8_t> raw = baseline_decompress(archive.payload);
  const std::size_t width = h.bit_depth == 8 ? 1 : 2;
  if (raw.size() != count * width) throw FormatError("payload", "raw payload has the wrong length");
  const double top = h.bit_depth == 8 ? 255.0 : 65535.0;
  ByteReader r(raw);
  Tensor out(shape);
  for (std::size_t i = 0; i < count; ++i) out[i] = (width == 1 ? r.u8("payload") : r.u16("payload")) / top;
  return out;
}

Tensor to_f32_precision(const Tensor& y) {
  Tensor out = y;
  for (double& v : out.values()) v = static_cast<float>(v);
  return out;
}

}  // namespace embcodec
