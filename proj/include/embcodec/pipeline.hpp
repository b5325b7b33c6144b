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

#ifndef EMBCODEC_PIPELINE_HPP_
#define EMBCODEC_PIPELINE_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "embcodec/archive.hpp"
#include "embcodec/entropy_model.hpp"
#include "embcodec/quantizer.hpp"
#include "embcodec/tensor.hpp"

namespace embcodec {

/// Everything both ends need to range-code NEC payloads: the density, its
/// symbol ranges, the frequency tables and the serialized blob whose hash
/// identifies them.
struct NecCodec {
  FactorizedDensity density{1};
  std::vector<SymbolRange> ranges;
  PMFTable tables;
  std::vector<std::uint8_t> blob;
  std::uint64_t model_id = 0;

  /// Ranges default to the density's 1e-9 tail quantiles.
  static NecCodec build(const FactorizedDensity& density, int precision_bits = 16,
                        std::optional<std::vector<SymbolRange>> ranges = std::nullopt);
  /// Rebuilds from a density blob. The blob must carry its ranges.
  static NecCodec from_blob(std::span<const std::uint8_t> blob, int precision_bits = 16);
};

/// round_quantize, then range_encode into an archive. With `embed_tables` the
/// archive is decodable without the density blob.
CompressedArchive nec_compress(const Tensor& y, const NecCodec& codec, bool embed_tables = false);
/// Uses the archive's own tables when present, otherwise `codec` (whose
/// model id and precision must match). Throws UsageError when neither is
/// available and FormatError on a model-id mismatch.
QuantizedEmbedding nec_decompress(const CompressedArchive& archive, const NecCodec* codec = nullptr);

/// Affine quantization to `bits` in [2, 8], or float storage for 16 / 32,
/// followed by the baseline byte compressor. A constant tensor is stored as
/// a constant marker with an empty payload.
CompressedArchive uqe_compress(const Tensor& y, int bits);
Tensor uqe_decompress(const CompressedArchive& archive);

/// Image values in [0, 1] stored as unsigned 8- or 16-bit integers
/// (little-endian), then baseline-compressed.
CompressedArchive rdc_compress(const Tensor& image, int bit_depth);
Tensor rdc_decompress(const CompressedArchive& archive);

/// Value a float-32 exchange of `y` would carry (every entry rounded to f32).
Tensor to_f32_precision(const Tensor& y);

}  // namespace embcodec

#endif  // EMBCODEC_PIPELINE_HPP_
