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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <gtest/gtest.h>

#include "embcodec/archive.hpp"
#include "embcodec/bench_pipeline.hpp"
#include "embcodec/byte_codec.hpp"
#include "embcodec/dataset.hpp"
#include "embcodec/error.hpp"
#include "embcodec/pipeline.hpp"
#include "embcodec/plot.hpp"
#include "embcodec/probe.hpp"
#include "embcodec/random.hpp"

namespace embcodec {
namespace {

namespace fs = std::filesystem;

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("embcodec_bench_test_" + name);
  fs::remove_all(p);
  return p;
}

SyntheticOptions small_data(std::uint64_t seed = 0) {
  SyntheticOptions o;
  o.train_count = 30;
  o.eval_count = 15;
  o.seed = seed;
  return o;
}

// --- dataset ---

TEST(Dataset, ShapesLabelsAndRange) {
  const Dataset d = generate_synthetic(SyntheticOptions{});
  EXPECT_EQ(d.train.size(), 600u);
  EXPECT_EQ(d.eval.size(), 300u);
  EXPECT_EQ(d.num_classes, 3);
  std::vector<int> counts(3, 0);
  for (int l : d.train.labels) ++counts[static_cast<std::size_t>(l)];
  EXPECT_EQ(counts, (std::vector<int>{200, 200, 200}));
  for (const auto& img : d.eval.images) {
    ASSERT_EQ(img.shape(), (std::vector<std::size_t>{1, 16, 16}));
    for (double v : img.values()) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
  }
}

TEST(Dataset, SeededAndSplitsDisjoint) {
  const Dataset a = generate_synthetic(small_data(4));
  const Dataset b = generate_synthetic(small_data(4));
  const Dataset c = generate_synthetic(small_data(5));
  EXPECT_EQ(a.train.images, b.train.images);
  EXPECT_EQ(a.eval.images, b.eval.images);
  EXPECT_NE(a.train.images, c.train.images);
  for (const auto& t : a.train.images)
    for (const auto& e : a.eval.images) ASSERT_NE(t, e);
  for (const auto& n : a.train.names)
    EXPECT_EQ(std::count(a.eval.names.begin(), a.eval.names.end(), n), 0);
}

TEST(Dataset, SaveLoadRoundTrip) {
  const Dataset d = generate_synthetic(small_data(2));
  const fs::path dir = temp_dir("roundtrip");
  save_dataset(dir.string(), d);
  std::ifstream csv(dir / "labels.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "file,label,split");
  const Dataset back = load_dataset(dir.string());
  EXPECT_EQ(back.num_classes, 3);
  EXPECT_EQ(back.train.images, d.train.images);
  EXPECT_EQ(back.train.labels, d.train.labels);
  EXPECT_EQ(back.eval.images, d.eval.images);
  EXPECT_EQ(back.eval.names, d.eval.names);
  fs::remove_all(dir);
}

TEST(Dataset, LoadErrors) {
  EXPECT_THROW(load_dataset("/nonexistent/embcodec"), IoError);
  const fs::path dir = temp_dir("bad");
  fs::create_directories(dir);
  {
    std::ofstream(dir / "labels.csv") << "file,label,split\nx.tnsr,abc,train\n";
  }
  EXPECT_THROW(load_dataset(dir.string()), FormatError);
  {
    std::ofstream(dir / "labels.csv") << "name,label\n";
  }
  EXPECT_THROW(load_dataset(dir.string()), FormatError);
  fs::remove_all(dir);
  SyntheticOptions o;
  o.num_classes = 1;
  EXPECT_THROW(generate_synthetic(o), DomainError);
}

// --- probe ---

// d x n token matrices whose mean over tokens 1.. separates the classes.
struct Fixture {
  std::vector<Tensor> train, eval;
  std::vector<int> train_labels, eval_labels;
};

Fixture separable(std::size_t count, int classes, std::uint64_t seed) {
  Rng rng(seed);
  Fixture f;
  const std::size_t d = 6, n = 5;
  auto make = [&](int label) {
    Tensor t = Tensor::matrix(d, n);
    for (std::size_t k = 0; k < d; ++k)
      for (std::size_t j = 0; j < n; ++j) t(k, j) = rng.normal(0.0, 0.3);
    // Class 0 in column 0 would be skipped; put the class signal elsewhere.
    for (std::size_t j = 1; j < n; ++j) t(static_cast<std::size_t>(label), j) += 3.0;
    t(0, 0) = 100.0 * label;  // the class token must not be used
    return t;
  };
  for (std::size_t i = 0; i < count; ++i) {
    const int l = static_cast<int>(i % static_cast<std::size_t>(classes));
    f.train.push_back(make(l));
    f.train_labels.push_back(l);
    f.eval.push_back(make(l));
    f.eval_labels.push_back(l);
  }
  return f;
}

TEST(Probe, SeparableFixtureIsPerfect) {
  const Fixture f = separable(90, 3, 1);
  for (Pooling pool : {Pooling::kMean, Pooling::kAttention}) {
    ProbeConfig c;
    c.pooling = pool;
    const ProbeResult r = train_probe(f.train, f.train_labels, f.eval, f.eval_labels, 3, c);
    EXPECT_EQ(r.accuracy, 1.0) << pooling_name(pool);
    EXPECT_EQ(r.total, 90u);
  }
}

TEST(Probe, ShuffledLabelsAtChance) {
  Fixture f = separable(300, 3, 2);
  Rng rng(9);
  for (std::size_t i = f.train_labels.size() - 1; i > 0; --i)
    std::swap(f.train_labels[i], f.train_labels[rng.below(i + 1)]);
  ProbeConfig c;
  const ProbeResult r = train_probe(f.train, f.train_labels, f.eval, f.eval_labels, 3, c);
  const double p = 1.0 / 3.0;
  const double sigma = std::sqrt(p * (1 - p) / 300.0);
  EXPECT_LT(std::abs(r.accuracy - p), 3.0 * sigma) << r.accuracy;
}

TEST(Probe, MeanPoolIgnoresTokenOrder) {
  const Fixture f = separable(60, 3, 3);
  Fixture g = f;
  Rng rng(4);
  auto permute = [&](Tensor& t) {
    std::vector<std::size_t> cols(t.cols() - 1);
    std::iota(cols.begin(), cols.end(), std::size_t{1});
    for (std::size_t i = cols.size() - 1; i > 0; --i) std::swap(cols[i], cols[rng.below(i + 1)]);
    Tensor out = t;
    for (std::size_t k = 0; k < t.rows(); ++k)
      for (std::size_t j = 0; j < cols.size(); ++j) out(k, j + 1) = t(k, cols[j]);
    t = out;
  };
  for (auto& t : g.train) permute(t);
  for (auto& t : g.eval) permute(t);
  const ProbeConfig c;
  const ProbeResult a = train_probe(f.train, f.train_labels, f.eval, f.eval_labels, 3, c);
  const ProbeResult b = train_probe(g.train, g.train_labels, g.eval, g.eval_labels, 3, c);
  EXPECT_EQ(a.accuracy, b.accuracy);
  EXPECT_EQ(a.predictions, b.predictions);
}

TEST(Probe, Errors) {
  Fixture f = separable(12, 3, 5);
  std::vector<int> one(f.train_labels.size(), 1);
  EXPECT_THROW(train_probe(f.train, one, f.eval, f.eval_labels, 3, {}), DegenerateInputError);
  std::vector<int> bad = f.train_labels;
  bad[0] = 7;
  EXPECT_THROW(train_probe(f.train, bad, f.eval, f.eval_labels, 3, {}), RangeError);
  std::vector<Tensor> wrong = f.eval;
  wrong[1] = Tensor::matrix(3, 5);
  EXPECT_THROW(train_probe(f.train, f.train_labels, wrong, f.eval_labels, 3, {}), DimensionError);
  std::vector<Tensor> cls_only(f.train.size(), Tensor::matrix(6, 1));
  EXPECT_THROW(train_probe(cls_only, f.train_labels, cls_only, f.train_labels, 3, {}), DimensionError);
  EXPECT_THROW(parse_pooling("max"), UsageError);
  EXPECT_EQ(parse_pooling("attention-pool"), Pooling::kAttention);
}

// --- codec pipelines ---

Tensor random_embedding(std::size_t e, std::size_t n, double scale, std::uint64_t seed) {
  Rng rng(seed);
  Tensor y = Tensor::matrix(e, n);
  for (double& v : y.values()) v = rng.normal(0.0, scale);
  return y;
}

TEST(Pipeline, NecRoundTripAndTablePolicies) {
  const FactorizedDensity density = FactorizedDensity::logistic(4);
  const NecCodec codec = NecCodec::build(density, 14);
  const Tensor y = random_embedding(4, 9, 2.0, 1);
  const QuantizedEmbedding want = round_quantize(y);

  const CompressedArchive referenced = unpack_archive(pack_archive(nec_compress(y, codec, false)));
  EXPECT_EQ(nec_decompress(referenced, &codec), want);
  EXPECT_THROW(nec_decompress(referenced, nullptr), UsageError);

  const CompressedArchive embedded = unpack_archive(pack_archive(nec_compress(y, codec, true)));
  EXPECT_EQ(nec_decompress(embedded, nullptr), want);

  const NecCodec other = NecCodec::build(FactorizedDensity(4, {3, 3, 3}, 10.0, 3), 14);
  EXPECT_THROW(nec_decompress(referenced, &other), FormatError);

  const NecCodec reloaded = NecCodec::from_blob(codec.blob, 14);
  EXPECT_EQ(reloaded.model_id, codec.model_id);
  EXPECT_EQ(reloaded.tables, codec.tables);
  EXPECT_THROW(nec_compress(random_embedding(5, 2, 1.0, 2), codec), DimensionError);
}

TEST(Pipeline, UqeStorage) {
  const Tensor y = random_embedding(8, 17, 1.0, 3);
  const CompressedArchive a2 = uqe_compress(y, 2);
  const CompressedArchive a8 = uqe_compress(y, 8);
  EXPECT_LT(a2.payload.size(), a8.payload.size());
  const Tensor f32 = to_f32_precision(y);
  EXPECT_EQ(uqe_decompress(unpack_archive(pack_archive(uqe_compress(f32, 32)))), f32);
  const Tensor h = uqe_decompress(uqe_compress(y, 16));
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(h[i], y[i], 1e-3 * (1 + std::abs(y[i])));
  const Tensor back = uqe_decompress(a8);
  const double scale = std::get<UqeHeader>(a8.header).scale;
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_LE(std::abs(back[i] - y[i]), scale / 2 + 1e-12);

  const Tensor flat = Tensor::matrix(3, 4, 0.25);
  const CompressedArchive c = uqe_compress(flat, 3);
  EXPECT_TRUE(std::get<UqeHeader>(c.header).constant);
  EXPECT_TRUE(c.payload.empty());
  EXPECT_EQ(uqe_decompress(unpack_archive(pack_archive(c))), flat);
}

TEST(Pipeline, RdcStorage) {
  const Dataset d = generate_synthetic(small_data(1));
  const Tensor& img = d.eval.images[0];
  const CompressedArchive a8 = rdc_compress(img, 8);
  const CompressedArchive a16 = rdc_compress(img, 16);
  EXPECT_LE(a8.payload.size(), a16.payload.size());
  const Tensor back8 = rdc_decompress(unpack_archive(pack_archive(a8)));
  EXPECT_EQ(back8.shape(), img.shape());
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_LE(std::abs(back8[i] - img[i]), 0.5 / 255 + 1e-12);
  // Decoding an 8-bit image again is lossless.
  EXPECT_EQ(rdc_decompress(rdc_compress(back8, 8)), back8);

  // Uniform random pixels leave nothing to squeeze.
  Rng rng(8);
  Tensor noise({1, 64, 64});
  for (double& v : noise.values()) v = static_cast<double>(rng.below(256)) / 255.0;
  const CompressedArchive n8 = rdc_compress(noise, 8);
  EXPECT_GE(static_cast<double>(n8.payload.size()), 0.99 * 64 * 64);

  Tensor bad({1, 2, 2}, 1.5);
  EXPECT_THROW(rdc_compress(bad, 8), RangeError);
  EXPECT_THROW(rdc_compress(img, 12), DomainError);
}

// --- bench pipeline ---

BenchOptions tiny_bench() {
  BenchOptions o;
  o.model.embed_dim = 8;
  o.model.encoder_depth = 1;
  o.model.encoder_heads = 2;
  o.model.mlp_ratio = 2;
  o.model.decoder_dim = 8;
  o.model.decoder_heads = 2;
  o.pretrain_steps = 10;
  o.batch_size = 4;
  o.adapt_steps = 5;
  o.density_fit_steps = 20;
  o.calibration_images = 8;
  o.lambda_multipliers = {0.1, 10.0};
  o.uqe_bits = {2, 32};
  o.rdc_depths = {8};
  o.seeds = {3, 4};
  o.probe.epochs = 30;
  o.finetune_epochs = 1;
  o.finetune_batch = 8;
  return o;
}

TEST(Bench, UqeFloat32MatchesUncompressedProbe) {
  const Dataset d = generate_synthetic(small_data(6));
  const BenchOptions o = tiny_bench();
  const Backbone b = pretrain_backbone(d, o, 1);
  const RDPoint p = run_uqe(b.model, d, 32, o, 1);
  ProbeConfig pc = o.probe;
  pc.seed = derive_seed(1, 6);
  const auto tr = embed_split(b.model, d.train.images);
  const auto ev = embed_split(b.model, d.eval.images);
  const ProbeResult ref = train_probe(tr, d.train.labels, ev, d.eval.labels, d.num_classes, pc);
  EXPECT_EQ(p.probe_accuracy, ref.accuracy);
  EXPECT_EQ(p.bits_per_sample, 8.0 * p.bytes_per_sample);
  EXPECT_EQ(p.distortion_mse, 0.0);
  const RDPoint p2 = run_uqe(b.model, d, 2, o, 1);
  const RDPoint p8 = run_uqe(b.model, d, 8, o, 1);
  EXPECT_LT(p2.bits_per_sample, p8.bits_per_sample);
}

TEST(Bench, NecPointAccounting) {
  const Dataset d = generate_synthetic(small_data(7));
  BenchOptions o = tiny_bench();
  const Backbone b = pretrain_backbone(d, o, 2);
  const AdaptedModel a = adapt(b, d, 1000.0, o, 2);
  const std::vector<RDPoint> pts = run_nec(a.model, a.density, d, 1000.0, o, 2);
  ASSERT_EQ(pts.size(), 2u);
  EXPECT_EQ(pts[0].method, "NEC");
  EXPECT_EQ(pts[1].method, "NEC+prefix");
  EXPECT_EQ(pts[0].bits_per_sample, pts[1].bits_per_sample);

  // Recompute the payload mean independently.
  const NecCodec codec = NecCodec::build(a.density, o.precision_bits);
  double bytes = 0.0;
  for (const auto& y : embed_split(a.model, d.eval.images)) bytes += nec_compress(y, codec).payload.size();
  EXPECT_DOUBLE_EQ(pts[0].bytes_per_sample, bytes / d.eval.size());
  EXPECT_EQ(pts[0].bits_per_sample, 8.0 * pts[0].bytes_per_sample);
  EXPECT_EQ(pts[0].one_time_cost_bytes, static_cast<double>(codec.blob.size()));
  EXPECT_EQ(pts[0].symbols, d.eval.size() * 8 * 17);  // 16 patches plus the class token

  o.fully_loaded = true;
  const std::vector<RDPoint> full = run_nec(a.model, a.density, d, 1000.0, o, 2);
  EXPECT_GT(full[0].bytes_per_sample, pts[0].bytes_per_sample);
}

TEST(Bench, RdcBitDepthOrdering) {
  const Dataset d = generate_synthetic(small_data(8));
  const BenchOptions o = tiny_bench();
  const Backbone b = pretrain_backbone(d, o, 1);
  const RDPoint p8 = run_rdc(b.model, d, 8, o, 1);
  const RDPoint p16 = run_rdc(b.model, d, 16, o, 1);
  EXPECT_LE(p8.bits_per_sample, p16.bits_per_sample);
  EXPECT_GT(p8.distortion_mse, p16.distortion_mse);
  EXPECT_GE(p8.probe_accuracy, 0.0);
  EXPECT_LE(p8.probe_accuracy, 1.0);
}

TEST(Bench, SweepGridAndDeterminism) {
  const Dataset d = generate_synthetic(small_data(9));
  const BenchOptions o = tiny_bench();
  const std::vector<RDPoint> a = sweep(d, o);
  // (NEC, NEC+prefix) x 2 lambdas + 2 UQE + 1 RDC, per seed.
  EXPECT_EQ(a.size(), (2 * 2 + 2 + 1) * o.seeds.size());
  for (const auto& p : a) EXPECT_TRUE(p.ok()) << p.method << ": " << p.error;
  const std::vector<RDPoint> b = sweep(d, o);
  EXPECT_EQ(rd_csv(a), rd_csv(b));
  EXPECT_EQ(rd_pareto_csv(a), rd_pareto_csv(b));
  for (std::size_t i = 1; i < a.size(); ++i) {
    ASSERT_LE(a[i - 1].method, a[i].method);
    if (a[i - 1].method == a[i].method) ASSERT_LE(a[i - 1].bits_per_sample, a[i].bits_per_sample);
  }
  const std::string csv = rd_csv(a);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "method,setting,seed,bits_per_sample,bytes_per_sample,distortion_mse,probe_accuracy,"
            "analytic_rate_bits,one_time_cost_bytes");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), static_cast<long>(a.size() + 1));
}

TEST(Bench, SweepRecordsFailuresPerRow) {
  Dataset d = generate_synthetic(small_data(10));
  d.eval.images[3][0] = 2.0;  // RDC refuses pixels outside [0, 1]
  BenchOptions o = tiny_bench();
  o.seeds = {1};
  o.lambda_multipliers = {1.0};
  o.prefix = false;
  const std::vector<RDPoint> pts = sweep(d, o);
  ASSERT_EQ(pts.size(), 4u);
  for (const auto& p : pts) {
    if (p.method == "RDC-8") {
      EXPECT_FALSE(p.ok());
      EXPECT_TRUE(std::isnan(p.bits_per_sample));
    } else {
      EXPECT_TRUE(p.ok()) << p.error;
    }
  }
  EXPECT_NE(rd_pareto_csv(pts).find("RDC expects pixels"), std::string::npos);
}

TEST(Bench, ParetoFlags) {
  auto pt = [](std::string m, double bits, double acc, std::uint64_t seed = 0) {
    RDPoint p;
    p.method = std::move(m);
    p.bits_per_sample = bits;
    p.bytes_per_sample = bits / 8;
    p.probe_accuracy = acc;
    p.seed = seed;
    return p;
  };
  std::vector<RDPoint> pts{pt("UQE-8", 800, 0.7), pt("NEC", 100, 0.6), pt("NEC", 300, 0.8), pt("UQE-2", 200, 0.5),
                           pt("NEC", 500, 0.8), pt("UQE-2", 200, 0.9, 1)};
  finalize_points(pts);
  std::vector<std::string> order;
  for (const auto& p : pts) order.push_back(p.method + "@" + std::to_string(static_cast<int>(p.bits_per_sample)));
  EXPECT_EQ(order, (std::vector<std::string>{"NEC@100", "NEC@300", "NEC@500", "UQE-2@200", "UQE-2@200", "UQE-8@800"}));
  EXPECT_TRUE(pts[0].pareto);
  EXPECT_TRUE(pts[1].pareto);
  EXPECT_FALSE(pts[2].pareto);  // same accuracy for more bits
  EXPECT_FALSE(pts[3].pareto);  // seed 0 UQE-2 is dominated by NEC@100
  EXPECT_TRUE(pts[4].pareto);   // alone in seed 1
  EXPECT_FALSE(pts[5].pareto);
}

TEST(Bench, PlotIsSvgWithOneLinePerMethod) {
  std::vector<RDPoint> pts(4);
  pts[0].method = "NEC";
  pts[0].bits_per_sample = 40;
  pts[0].probe_accuracy = 0.5;
  pts[1].method = "NEC";
  pts[1].bits_per_sample = 600;
  pts[1].probe_accuracy = 0.75;
  pts[2].method = "UQE-2";
  pts[2].bits_per_sample = 650;
  pts[2].probe_accuracy = 0.7;
  pts[3].method = "RDC-8";
  pts[3].error = "boom";  // failed rows are not drawn
  const std::string svg = rd_plot_svg(pts, "toy");
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  EXPECT_NE(svg.find("NEC"), std::string::npos);
  EXPECT_NE(svg.find("UQE-2"), std::string::npos);
  EXPECT_EQ(svg.find("RDC-8"), std::string::npos);
  EXPECT_EQ(svg.find("nan"), std::string::npos);
}

TEST(Bench, OptionValidation) {
  BenchOptions o = tiny_bench();
  o.uqe_bits = {9};
  EXPECT_THROW(o.validate(), DomainError);
  o = tiny_bench();
  o.rdc_depths = {12};
  EXPECT_THROW(o.validate(), DomainError);
  o = tiny_bench();
  o.seeds.clear();
  EXPECT_THROW(o.validate(), UsageError);
  o = tiny_bench();
  o.lambdas = {-1.0};
  EXPECT_THROW(o.validate(), DomainError);
}

}  // namespace
}  // namespace embcodec
