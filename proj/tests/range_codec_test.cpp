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

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "embcodec/archive.hpp"
#include "embcodec/byte_codec.hpp"
#include "embcodec/entropy_model.hpp"
#include "embcodec/error.hpp"
#include "embcodec/random.hpp"
#include "embcodec/range_coder.hpp"

using namespace embcodec;

namespace {

QuantizedEmbedding random_symbols(std::size_t e, std::size_t n, double sd, Rng& rng) {
  QuantizedEmbedding q(e, n);
  for (auto& s : q.symbols) s = static_cast<std::int32_t>(std::lround(rng.normal(0, sd)));
  return q;
}

PMFTable logistic_tables(std::size_t e, std::int32_t lo, std::int32_t hi, int bits) {
  const auto d = FactorizedDensity::logistic(static_cast<int>(e));
  const std::vector<SymbolRange> ranges(e, SymbolRange{lo, hi});
  return build_pmf_tables(d, ranges, bits);
}

// Tables that put almost all mass on symbol 0.
PMFTable peaked_tables(std::size_t e) {
  PMFTable t;
  t.precision_bits = 16;
  const std::vector<double> probs{0.0005, 0.999, 0.0004, 0.0001};
  for (std::size_t c = 0; c < e; ++c) t.channels.push_back(quantize_pmf(probs, -1, 1, 16));
  return t;
}

CompressedArchive sample_nec_archive(std::size_t e, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  const auto tables = logistic_tables(e, -6, 6, 16);
  const auto q = random_symbols(e, n, 2.0, rng);
  CompressedArchive a;
  a.mode = ArchiveMode::kNec;
  a.channels = static_cast<std::uint16_t>(e);
  a.tokens = static_cast<std::uint32_t>(n);
  NecHeader h;
  h.precision_bits = 16;
  h.ranges.assign(e, SymbolRange{-6, 6});
  h.tables = tables;
  a.header = h;
  a.payload = range_encode(q, tables);
  return a;
}

}  // namespace

TEST(RangeCoder, RoundTripsSeededGridsWithEscapes) {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    Rng rng(seed);
    const std::size_t e = 1 + rng.below(8), n = rng.below(41);
    const int bits = seed % 2 ? 16 : 12;
    const auto tables = logistic_tables(e, -4, 4, bits);
    auto q = random_symbols(e, n, 0.5 + 6.0 * rng.uniform(), rng);
    if (n > 0 && seed % 7 == 0) q.at(0, 0) = std::numeric_limits<std::int32_t>::max();
    if (n > 1 && seed % 11 == 0) q.at(e - 1, n - 1) = std::numeric_limits<std::int32_t>::min();
    const auto payload = range_encode(q, tables);
    ASSERT_EQ(range_decode(payload, tables, e, n), q) << "seed " << seed;
  }
}

TEST(RangeCoder, EmptyGridHasTinyPayload) {
  const auto tables = logistic_tables(4, -3, 3, 16);
  const QuantizedEmbedding q(4, 0);
  const auto payload = range_encode(q, tables);
  EXPECT_LE(payload.size(), 16u);
  EXPECT_EQ(range_decode(payload, tables, 4, 0), q);
}

TEST(RangeCoder, ConfidentZeroGridIsSmall) {
  const auto tables = peaked_tables(32);
  const QuantizedEmbedding q(32, 17);
  const auto payload = range_encode(q, tables);
  EXPECT_LT(payload.size(), 100u);
  EXPECT_EQ(range_decode(payload, tables, 32, 17), q);
}

TEST(RangeCoder, PayloadTracksIdealCodeLength) {
  Rng rng(77);
  for (int bits : {12, 16}) {
    const auto tables = logistic_tables(16, -12, 12, bits);
    const auto q = random_symbols(16, 512, 1.8, rng);
    const double ideal = ideal_code_bits(q, tables);
    const double actual = 8.0 * static_cast<double>(range_encode(q, tables).size());
    EXPECT_LE(std::abs(actual - ideal) / actual, 0.02) << "precision " << bits;
    EXPECT_GE(actual + 8, ideal);
  }
}

TEST(RangeCoder, IdealBitsCountEscapes) {
  PMFTable t;
  t.precision_bits = 8;
  t.channels.push_back(quantize_pmf(std::vector<double>{0.5, 0.25, 0.25}, 0, 1, 8));
  QuantizedEmbedding q(1, 3);
  q.at(0, 0) = 0;
  q.at(0, 1) = 1;
  q.at(0, 2) = 9;
  EXPECT_NEAR(ideal_code_bits(q, t), 1 + 2 + 2 + 32, 1e-12);
}

TEST(RangeCoder, RejectsTrailingBytesAndTableMismatch) {
  const auto tables = logistic_tables(2, -3, 3, 16);
  Rng rng(1);
  const auto q = random_symbols(2, 30, 1.0, rng);
  auto payload = range_encode(q, tables);
  payload.push_back(0x5A);
  EXPECT_THROW(range_decode(payload, tables, 2, 30), CorruptionError);
  EXPECT_THROW(range_decode(payload, tables, 3, 30), DimensionError);
}

TEST(RangeCoder, RawBitsRoundTrip) {
  RangeEncoder enc;
  for (std::uint32_t v = 0; v < 300; ++v) enc.encode_bits((v * 2654435761u) >> 16, 16);
  const auto bytes = enc.finish();
  RangeDecoder dec(bytes);
  for (std::uint32_t v = 0; v < 300; ++v) ASSERT_EQ(dec.decode_bits(16), (v * 2654435761u) >> 16);
  EXPECT_LE(bytes.size(), 600u + 2);
}

TEST(ByteCodec, RoundTripsAndCompressesZeros) {
  const std::vector<std::uint8_t> zeros(1000000, 0);
  const auto packed = baseline_compress(zeros);
  EXPECT_LT(packed.size(), zeros.size() / 100);
  EXPECT_EQ(baseline_decompress(packed), zeros);
}

TEST(ByteCodec, RandomBytesDoNotShrink) {
  Rng rng(4);
  std::vector<std::uint8_t> data(100000);
  for (auto& b : data) b = static_cast<std::uint8_t>(rng.below(256));
  const auto packed = baseline_compress(data);
  EXPECT_GE(packed.size(), data.size() * 99 / 100);
  EXPECT_EQ(baseline_decompress(packed), data);
}

TEST(ByteCodec, EmptyAndSmallInputs) {
  for (std::size_t n : {0u, 1u, 2u, 17u}) {
    std::vector<std::uint8_t> data(n);
    for (std::size_t i = 0; i < n; ++i) data[i] = static_cast<std::uint8_t>(i * 37);
    EXPECT_EQ(baseline_decompress(baseline_compress(data)), data);
  }
}

TEST(ByteCodec, DetectsCorruption) {
  std::vector<std::uint8_t> data(5000);
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<std::uint8_t>((i * i) % 13);
  auto packed = baseline_compress(data);
  packed[packed.size() / 2] ^= 0x10;
  EXPECT_THROW(baseline_decompress(packed), CorruptionError);
  EXPECT_THROW(baseline_decompress(std::vector<std::uint8_t>{0x80}), CorruptionError);
}

TEST(ByteCodec, Crc32KnownVector) {
  const std::string s = "123456789";
  EXPECT_EQ(crc32(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size())), 0xCBF43926u);
}

TEST(Archive, NecRoundTripEmbeddedAndReferenced) {
  const auto a = sample_nec_archive(5, 40, 1);
  EXPECT_EQ(unpack_archive(pack_archive(a)), a);
  auto b = a;
  auto& h = std::get<NecHeader>(b.header);
  h.tables.reset();
  h.model_id = 0x0123456789ABCDEFull;
  EXPECT_EQ(unpack_archive(pack_archive(b)), b);
}

TEST(Archive, UqeAndRdcRoundTrip) {
  CompressedArchive u;
  u.mode = ArchiveMode::kUqe;
  u.channels = 4;
  u.tokens = 9;
  u.header = UqeHeader{.bits = 4, .constant = false, .scale = 0.125, .zero_point = 7, .min = -0.875};
  u.payload = {1, 2, 3};
  EXPECT_EQ(unpack_archive(pack_archive(u)), u);

  CompressedArchive r;
  r.mode = ArchiveMode::kRdc;
  r.channels = 0;
  r.tokens = 0;
  r.header = RdcHeader{.bit_depth = 16, .shape = {1, 16, 16}};
  r.payload = std::vector<std::uint8_t>(20, 9);
  EXPECT_EQ(unpack_archive(pack_archive(r)), r);
}

TEST(Archive, HeaderLayoutOracle) {
  // e = 8 channels, 63 symbols + escape = 64 slots each, embedded tables.
  const auto tables = logistic_tables(8, -31, 31, 16);
  CompressedArchive a;
  a.mode = ArchiveMode::kNec;
  a.channels = 8;
  a.tokens = 3;
  NecHeader h;
  h.ranges.assign(8, SymbolRange{-31, 31});
  h.tables = tables;
  a.header = h;
  // magic + version + mode + e + n + precision, 8 ranges, kind, 512 u32, payload_len
  EXPECT_EQ(archive_header_size(a), 13u + 64 + 1 + 2048 + 8);
  EXPECT_EQ(archive_header_size(a), 2134u);
  a.payload = {0xAB};
  const auto bytes = pack_archive(a);
  ASSERT_EQ(bytes.size(), 2134u + 1 + 4);
  EXPECT_EQ(bytes[4], 1);   // version
  EXPECT_EQ(bytes[5], 0);   // NEC
  EXPECT_EQ(bytes[6], 8);   // e, little-endian
  EXPECT_EQ(bytes[8], 3);   // n
  EXPECT_EQ(bytes[12], 16); // precision
  EXPECT_EQ(bytes[2134], 0xAB);
}

TEST(Archive, RejectsOtherVersionsAndMagic) {
  auto bytes = pack_archive(sample_nec_archive(2, 5, 3));
  auto v2 = bytes;
  v2[4] = 2;
  try {
    unpack_archive(v2);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.field(), "version");
  }
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  try {
    unpack_archive(bad_magic);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.field(), "magic");
  }
}

TEST(Archive, SingleByteFlipsAreDetected) {
  const auto bytes = pack_archive(sample_nec_archive(6, 64, 9));
  Rng rng(123);
  for (int trial = 0; trial < 256; ++trial) {
    auto corrupt = bytes;
    const std::size_t pos = rng.below(corrupt.size());
    corrupt[pos] ^= static_cast<std::uint8_t>(1 + rng.below(255));
    try {
      unpack_archive(corrupt);
      FAIL() << "flip at " << pos << " went unnoticed";
    } catch (const FormatError& e) {
      if (pos >= 5) EXPECT_EQ(e.field(), "checksum");
    }
  }
}

TEST(Archive, TruncationIsDetected) {
  const auto bytes = pack_archive(sample_nec_archive(3, 20, 4));
  for (std::size_t cut : {0u, 3u, 5u, 20u}) {
    EXPECT_THROW(unpack_archive(std::span(bytes).first(bytes.size() - 1 - cut)), FormatError);
  }
}
