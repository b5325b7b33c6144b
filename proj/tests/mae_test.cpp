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
#include <numeric>

#include "embcodec/error.hpp"
#include "embcodec/gradcheck.hpp"
#include "embcodec/kernels.hpp"
#include "embcodec/mae.hpp"
#include "embcodec/random.hpp"

using namespace embcodec;

namespace {

// Small enough for exhaustive finite-difference checks.
MaeConfig tiny_config() {
  MaeConfig c;
  c.image_size = 8;
  c.patch_size = 4;
  c.embed_dim = 8;
  c.encoder_depth = 1;
  c.encoder_heads = 2;
  c.mlp_ratio = 2;
  c.decoder_dim = 4;
  c.decoder_depth = 2;
  c.decoder_heads = 2;
  c.mask_ratio = 0.5;
  return c;
}

Tensor random_image(const MaeConfig& c, std::uint64_t seed) {
  Rng rng(seed);
  Tensor img({c.channels, c.image_size, c.image_size});
  for (double& v : img.storage()) v = rng.uniform();
  return img;
}

// Parameter count of a pre-norm block, written out independently. The qkv
// projection carries query and value biases only.
std::size_t block_params(std::size_t d, std::size_t ratio) {
  return 2 * d + (d * 3 * d + 2 * d) + (d * d + d) + 2 * d + (d * ratio * d + ratio * d) + (ratio * d * d + d);
}

FactorizedDensity perturbed_density(int channels, std::uint64_t seed) {
  FactorizedDensity d(channels, {3, 3, 3}, 10.0, seed);
  Rng rng(derive_seed(seed, 9));
  for (double& v : d.params()) v += rng.normal(0, 0.3);
  return d;
}

}  // namespace

TEST(MaeConfig, TokenCounts) {
  MaeConfig c;
  EXPECT_EQ(c.tokens(0.0), 17u);
  EXPECT_EQ(c.tokens(0.75), 5u);
  EXPECT_EQ(c.num_patches(), 16u);
  EXPECT_THROW(c.tokens(1.0), DomainError);
  EXPECT_THROW(c.tokens(0.99), DomainError);
  c.patch_size = 5;
  EXPECT_THROW(c.validate(), DimensionError);
}

TEST(MaeModel, ParameterCountsMatchArchitecture) {
  const MaeModel m(MaeConfig{}, 0);
  const std::size_t e = 32, dd = 16, pd = 16;
  EXPECT_EQ(m.group_size(ParamGroup::kEncoderPatchEmbed), pd * e + e);
  EXPECT_EQ(m.group_size(ParamGroup::kEncoderBlocks), e + 2 * block_params(e, 4));
  EXPECT_EQ(m.group_size(ParamGroup::kFinalEncoderLayer), 2 * e + e * e + e);
  EXPECT_EQ(m.group_size(ParamGroup::kDecoderPatchEmbed), e * dd + dd + dd);
  EXPECT_EQ(m.group_size(ParamGroup::kFirstDecoderLayer), block_params(dd, 4));
  EXPECT_EQ(m.group_size(ParamGroup::kRemainingDecoder), 2 * dd + dd * pd + pd);
  EXPECT_EQ(m.num_params(), 31152u);
}

TEST(MaeModel, AdaptationMaskTrainsAFewPercent) {
  const MaeModel m(MaeConfig{}, 0);
  EXPECT_EQ(m.trainable_count(FreezeMask::adaptation()), 5472u);
  const double f = m.trainable_fraction(FreezeMask::adaptation());
  EXPECT_GE(f, 0.05);
  EXPECT_LE(f, 0.25);
  EXPECT_EQ(m.trainable_count(FreezeMask::all()), 0u);
  EXPECT_EQ(m.trainable_count(FreezeMask::none()), m.num_params());
  EXPECT_EQ(FreezeMask::parse("adaptation"), FreezeMask::adaptation());
  EXPECT_THROW(FreezeMask::parse("most"), UsageError);
}

TEST(Patches, RoundTripAndOrder) {
  MaeConfig c;
  c.channels = 2;
  const Tensor img = random_image(c, 3);
  const Tensor p = patchify(c, img);
  EXPECT_EQ(p.rows(), 16u);
  EXPECT_EQ(p.cols(), 32u);
  // Patch 1 is the second patch of the top row; its first pixel is (0, 0, 4).
  EXPECT_EQ(p(1, 0), img[4]);
  EXPECT_EQ(unpatchify(c, p), img);
  EXPECT_THROW(patchify(c, Tensor({1, 16, 16})), DimensionError);
}

TEST(Masking, UniformSortedAndSeeded) {
  const auto a = sample_kept_patches(16, 4, 7), b = sample_kept_patches(16, 4, 7);
  EXPECT_EQ(a, b);
  EXPECT_TRUE(std::is_sorted(a.begin(), a.end()));
  EXPECT_EQ(std::adjacent_find(a.begin(), a.end()), a.end());
  // Each patch is kept with probability 1/4.
  std::vector<int> hits(16, 0);
  for (std::uint64_t s = 0; s < 4000; ++s)
    for (auto k : sample_kept_patches(16, 4, s)) ++hits[k];
  for (int h : hits) EXPECT_NEAR(h / 4000.0, 0.25, 0.03);
}

TEST(Forward, ShapesAndDeterminism) {
  const MaeModel m(MaeConfig{}, 1);
  const Tensor img = random_image(m.config(), 2);
  const auto r1 = forward(m, img, 5), r2 = forward(m, img, 5);
  EXPECT_EQ(r1.y.shape(), (std::vector<std::size_t>{32, 5}));
  EXPECT_EQ(r1.y, r2.y);
  EXPECT_EQ(r1.reconstruction, r2.reconstruction);
  EXPECT_EQ(r1.kept.size(), 4u);
  EXPECT_EQ(r1.masked.size(), 12u);
  EXPECT_EQ(forward(m, img, 5, 0.0).y.cols(), 17u);
  EXPECT_EQ(embed(m, img, 5), r1.y);
  EXPECT_THROW(forward(m, Tensor({1, 8, 8}), 5), DimensionError);
}

TEST(Forward, ClassTokenSeesOnlyVisiblePatches) {
  const MaeModel m(MaeConfig{}, 1);
  Tensor img = random_image(m.config(), 2);
  const auto r = forward(m, img, 11);
  // Changing a masked patch leaves the embedding unchanged.
  const std::size_t hidden = r.masked.front();
  const std::size_t gr = hidden / 4, gc = hidden % 4;
  img[(gr * 4) * 16 + gc * 4] += 5.0;
  EXPECT_EQ(forward(m, img, 11).y, r.y);
}

TEST(CompressionLoss, DecomposesExactly) {
  const MaeModel m(MaeConfig{}, 3);
  const FactorizedDensity d(32, {3, 3, 3}, 10.0, 4);
  const Tensor img = random_image(m.config(), 5);
  const auto zero = compression_loss(m, img, &d, 0.0, 6);
  EXPECT_EQ(zero.loss, zero.rate);
  const auto t = compression_loss(m, img, &d, 123.0, 6);
  EXPECT_EQ(t.loss, 123.0 * t.distortion + t.rate);
  EXPECT_EQ(t.rate, zero.rate);
  const auto plain = compression_loss(m, img, nullptr, 1.0, 6);
  EXPECT_EQ(plain.rate, 0.0);
  EXPECT_EQ(plain.loss, plain.distortion);
}

TEST(CompressionLoss, DensityChannelMismatchThrows) {
  const MaeModel m(MaeConfig{}, 3);
  const FactorizedDensity d(16);
  EXPECT_THROW(compression_loss(m, random_image(m.config(), 1), &d, 1.0, 0), DimensionError);
}

TEST(CompressionLoss, GradientsMatchFiniteDifferences) {
  const MaeConfig c = tiny_config();
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const MaeModel base(c, seed);
    const FactorizedDensity dens = perturbed_density(static_cast<int>(c.embed_dim), seed + 10);
    const Tensor img = random_image(c, seed + 20);
    const double lambda = 50.0;
    const std::size_t nm = base.num_params();
    std::vector<double> x(base.params().begin(), base.params().end());
    x.insert(x.end(), dens.params().begin(), dens.params().end());
    const LossFn loss = [&](std::span<const double> p, std::span<double> g) {
      MaeModel m = base;
      FactorizedDensity d = dens;
      std::copy_n(p.begin(), nm, m.params().begin());
      std::copy(p.begin() + static_cast<std::ptrdiff_t>(nm), p.end(), d.params().begin());
      if (g.empty()) return compression_loss(m, img, &d, lambda, seed).loss;
      const auto r = compression_loss_gradients(m, img, &d, lambda, seed);
      std::copy(r.model_grad.begin(), r.model_grad.end(), g.begin());
      std::copy(r.density_grad.begin(), r.density_grad.end(), g.begin() + static_cast<std::ptrdiff_t>(nm));
      return r.terms.loss;
    };
    const auto report = grad_check(loss, x, 1e-4);
    EXPECT_LT(report.max_rel_error, 1e-4) << "seed " << seed << " worst " << report.worst_index << " analytic "
                                          << report.worst_analytic << " numeric " << report.worst_numeric;
  }
}

TEST(CompressionLoss, PlainReconstructionGradient) {
  const MaeConfig c = tiny_config();
  const MaeModel base(c, 4);
  const Tensor img = random_image(c, 8);
  std::vector<double> x(base.params().begin(), base.params().end());
  const LossFn loss = [&](std::span<const double> p, std::span<double> g) {
    MaeModel m = base;
    std::copy(p.begin(), p.end(), m.params().begin());
    if (g.empty()) return compression_loss(m, img, nullptr, 1.0, 3).loss;
    const auto r = compression_loss_gradients(m, img, nullptr, 1.0, 3);
    std::copy(r.model_grad.begin(), r.model_grad.end(), g.begin());
    return r.terms.loss;
  };
  EXPECT_LT(grad_check(loss, x, 1e-4).max_rel_error, 1e-4);
}

TEST(CompressionLoss, WideDensityLeavesDistortionGradient) {
  const MaeModel m(tiny_config(), 2);
  // Very flat logistic: the rate barely depends on y.
  FactorizedDensity d = FactorizedDensity::logistic(8);
  for (int c = 0; c < 8; ++c) d.params()[d.params_per_channel() * c] = softplus_inverse(1e-4);
  const Tensor img = random_image(m.config(), 1);
  const double lambda = 10.0;
  const auto full = compression_loss_gradients(m, img, &d, lambda, 4);
  const auto rate_only = compression_loss_gradients(m, img, &d, 0.0, 4);
  double num = 0, den = 0;
  for (std::size_t i = 0; i < full.model_grad.size(); ++i) {
    num += rate_only.model_grad[i] * rate_only.model_grad[i];
    den += full.model_grad[i] * full.model_grad[i];
  }
  EXPECT_LT(std::sqrt(num / den), 1e-3);
}

TEST(BatchGradients, ParallelMatchesSerialBitwise) {
  const MaeModel m(MaeConfig{}, 5);
  const FactorizedDensity d(32, {3, 3, 3}, 10.0, 1);
  std::vector<Tensor> imgs;
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t i = 0; i < 6; ++i) {
    imgs.push_back(random_image(m.config(), i));
    seeds.push_back(100 + i);
  }
  const auto a = batch_gradients(m, &d, imgs, seeds, 7.0);
  const auto b = batch_gradients_serial(m, &d, imgs, seeds, 7.0);
  EXPECT_EQ(a.model_grad, b.model_grad);
  EXPECT_EQ(a.density_grad, b.density_grad);
  EXPECT_EQ(a.terms.loss, b.terms.loss);
}

TEST(Train, FullFreezeKeepsModelAndMovesDensity) {
  MaeModel m(tiny_config(), 1);
  const MaeModel before = m;
  FactorizedDensity d(8);
  const FactorizedDensity d0 = d;
  std::vector<Tensor> imgs{random_image(m.config(), 1), random_image(m.config(), 2)};
  TrainOptions o;
  o.steps = 5;
  o.batch_size = 2;
  o.freeze = FreezeMask::all();
  train(m, &d, imgs, o);
  EXPECT_EQ(m, before);
  EXPECT_NE(d, d0);
}

TEST(Train, AdaptationMaskLeavesFrozenGroupsBitIdentical) {
  MaeModel m(MaeConfig{}, 1);
  const MaeModel before = m;
  FactorizedDensity d(32);
  std::vector<Tensor> imgs;
  for (std::uint64_t i = 0; i < 4; ++i) imgs.push_back(random_image(m.config(), i));
  TrainOptions o;
  o.steps = 3;
  o.batch_size = 2;
  o.lambda = 100.0;
  o.freeze = FreezeMask::adaptation();
  train(m, &d, imgs, o);
  for (const auto& s : m.segments()) {
    const bool frozen = o.freeze.frozen[static_cast<std::size_t>(s.group)];
    const bool same = std::equal(m.params().begin() + static_cast<std::ptrdiff_t>(s.offset),
                                 m.params().begin() + static_cast<std::ptrdiff_t>(s.offset + s.size),
                                 before.params().begin() + static_cast<std::ptrdiff_t>(s.offset));
    EXPECT_EQ(same, frozen) << s.name;
  }
}

TEST(Train, LossDecreasesOnFixedImages) {
  MaeModel m(tiny_config(), 2);
  std::vector<Tensor> imgs;
  for (std::uint64_t i = 0; i < 4; ++i) imgs.push_back(random_image(m.config(), i));
  TrainOptions o;
  o.steps = 300;
  o.batch_size = 4;
  o.lr = 3e-3;
  const auto r = train(m, nullptr, imgs, o);
  double first = 0, last = 0;
  for (int i = 0; i < 20; ++i) {
    first += r.trace[i].loss;
    last += r.trace[r.trace.size() - 20 + i].loss;
  }
  EXPECT_LT(last, 0.7 * first);
  for (const auto& t : r.trace) EXPECT_EQ(t.loss, o.lambda * t.distortion + t.rate);
}

TEST(Train, NonFiniteImageReportsStep) {
  MaeModel m(tiny_config(), 2);
  Tensor bad = random_image(m.config(), 1);
  bad[0] = std::nan("");
  std::vector<Tensor> imgs{bad};
  TrainOptions o;
  o.steps = 3;
  o.batch_size = 1;
  try {
    train(m, nullptr, imgs, o);
    FAIL();
  } catch (const TrainingError& e) {
    EXPECT_EQ(e.step(), 0u);
  }
}

TEST(Train, DeterministicGivenSeed) {
  std::vector<Tensor> imgs;
  for (std::uint64_t i = 0; i < 3; ++i) imgs.push_back(random_image(tiny_config(), i));
  TrainOptions o;
  o.steps = 10;
  o.batch_size = 2;
  o.seed = 4;
  MaeModel a(tiny_config(), 1), b(tiny_config(), 1);
  FactorizedDensity da(8), db(8);
  train(a, &da, imgs, o);
  train(b, &db, imgs, o);
  EXPECT_EQ(a, b);
  EXPECT_EQ(da, db);
}

TEST(Prefix, ShapeAndDependence) {
  const MaeModel m(MaeConfig{}, 1);
  const Tensor y = embed(m, random_image(m.config(), 1), 0, 0.0);
  const Tensor h = decoder_prefix(m, y);
  EXPECT_EQ(h.shape(), (std::vector<std::size_t>{17, 16}));
  EXPECT_THROW(decoder_prefix(m, Tensor::matrix(32, 5)), DimensionError);
}

TEST(EmbedBackward, MatchesFiniteDifferences) {
  const MaeConfig c = tiny_config();
  const MaeModel base(c, 6);
  const Tensor img = random_image(c, 2);
  Rng rng(1);
  Tensor w = Tensor::matrix(c.embed_dim, c.num_patches() + 1);
  for (double& v : w.storage()) v = rng.normal();
  std::vector<double> x(base.params().begin(), base.params().end());
  // L = <w, embed(x)>
  const LossFn loss = [&](std::span<const double> p, std::span<double> g) {
    MaeModel m = base;
    std::copy(p.begin(), p.end(), m.params().begin());
    const Tensor y = embed(m, img, 0, 0.0);
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += w[i] * y[i];
    if (!g.empty()) {
      const auto gr = embed_backward(m, img, w);
      std::copy(gr.begin(), gr.end(), g.begin());
    }
    return s;
  };
  EXPECT_LT(grad_check(loss, x, 1e-4).max_rel_error, 1e-4);
}

TEST(Checkpoint, RoundTripAndValidation) {
  MaeConfig c = tiny_config();
  c.channels = 3;
  const MaeModel m(c, 9);
  const auto bytes = encode_checkpoint(m);
  EXPECT_EQ(bytes[0], 0x4D);
  EXPECT_EQ(bytes[1], 0x41);
  EXPECT_EQ(bytes[2], 0x45);
  EXPECT_EQ(bytes[3], 0x31);
  EXPECT_EQ(decode_checkpoint(bytes), m);
  auto bad = bytes;
  bad[0] = 0;
  EXPECT_THROW(decode_checkpoint(bad), FormatError);
  EXPECT_THROW(decode_checkpoint(std::span(bytes).first(bytes.size() - 3)), FormatError);
}
