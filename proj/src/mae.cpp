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

#include "embcodec/mae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "embcodec/binio.hpp"
#include "embcodec/error.hpp"
#include "embcodec/quantizer.hpp"
#include "embcodec/random.hpp"

namespace embcodec {

using nn::BlockCache;
using nn::NormCache;

void MaeConfig::validate() const {
  if (patch_size == 0 || image_size == 0 || image_size % patch_size != 0)
    throw DimensionError("image size must be a positive multiple of the patch size");
  if (channels < 1 || channels > 3) throw DimensionError("images must have 1 to 3 channels");
  if (embed_dim == 0 || embed_dim % 4 != 0) throw DimensionError("embed_dim must be a positive multiple of 4");
  if (decoder_dim == 0 || decoder_dim % 4 != 0) throw DimensionError("decoder_dim must be a positive multiple of 4");
  if (encoder_heads == 0 || embed_dim % encoder_heads != 0)
    throw DimensionError("embed_dim must be divisible by encoder_heads");
  if (decoder_heads == 0 || decoder_dim % decoder_heads != 0)
    throw DimensionError("decoder_dim must be divisible by decoder_heads");
  if (decoder_depth < 1) throw DimensionError("the decoder needs at least one block");
  if (mlp_ratio < 1) throw DimensionError("mlp_ratio must be at least 1");
  if (embed_dim > 65535 || image_size > 65535) throw DimensionError("dimension too large");
  kept_patches(mask_ratio);
}

std::size_t MaeConfig::kept_patches(double ratio) const {
  if (!(ratio >= 0.0 && ratio < 1.0)) throw DomainError("mask ratio must lie in [0, 1)");
  const double p = static_cast<double>(num_patches());
  // The small slack keeps e.g. 10 * (1 - 0.9) from flooring to 0.
  const auto keep = static_cast<std::size_t>(std::floor(p * (1.0 - ratio) + 1e-9));
  if (keep < 1) throw DomainError("mask ratio leaves no visible patch");
  return keep;
}

const char* group_name(ParamGroup g) noexcept {
  switch (g) {
    case ParamGroup::kEncoderPatchEmbed: return "encoder_patch_embed";
    case ParamGroup::kEncoderBlocks: return "encoder_blocks";
    case ParamGroup::kFinalEncoderLayer: return "final_encoder_layer";
    case ParamGroup::kDecoderPatchEmbed: return "decoder_patch_embed";
    case ParamGroup::kFirstDecoderLayer: return "first_decoder_layer";
    case ParamGroup::kRemainingDecoder: return "remaining_decoder";
  }
  return "?";
}

FreezeMask FreezeMask::adaptation() {
  FreezeMask m;
  m.frozen = {false, true, false, false, false, true};
  return m;
}

FreezeMask FreezeMask::all() {
  FreezeMask m;
  m.frozen.fill(true);
  return m;
}

FreezeMask FreezeMask::parse(const std::string& name) {
  if (name == "adaptation") return adaptation();
  if (name == "none") return none();
  if (name == "all") return all();
  throw UsageError("unknown freeze mask '" + name + "' (expected adaptation, none or all)");
}

MaeModel::MaeModel(const MaeConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const auto g = [](ParamGroup x) { return static_cast<int>(x); };
  const std::size_t e = config_.embed_dim, dd = config_.decoder_dim;
  specs_.patch_embed = nn::add_linear(layout_, "patch_embed", config_.patch_dim(), e, g(ParamGroup::kEncoderPatchEmbed));
  specs_.cls = layout_.add("cls_token", e, g(ParamGroup::kEncoderBlocks));
  for (std::size_t i = 0; i < config_.encoder_depth; ++i)
    specs_.encoder.push_back(nn::add_block(layout_, "blocks." + std::to_string(i), e, config_.encoder_heads,
                                           config_.mlp_ratio, g(ParamGroup::kEncoderBlocks)));
  specs_.encoder_norm = nn::add_norm(layout_, "norm", e, g(ParamGroup::kFinalEncoderLayer));
  specs_.bottleneck = nn::add_linear(layout_, "bottleneck", e, e, g(ParamGroup::kFinalEncoderLayer));
  specs_.decoder_embed = nn::add_linear(layout_, "decoder_embed", e, dd, g(ParamGroup::kDecoderPatchEmbed));
  specs_.mask_token = layout_.add("mask_token", dd, g(ParamGroup::kDecoderPatchEmbed));
  for (std::size_t i = 0; i < config_.decoder_depth; ++i)
    specs_.decoder.push_back(nn::add_block(layout_, "decoder_blocks." + std::to_string(i), dd,
                                           config_.decoder_heads, config_.mlp_ratio,
                                           g(i == 0 ? ParamGroup::kFirstDecoderLayer : ParamGroup::kRemainingDecoder)));
  specs_.decoder_norm = nn::add_norm(layout_, "decoder_norm", dd, g(ParamGroup::kRemainingDecoder));
  specs_.decoder_pred = nn::add_linear(layout_, "decoder_pred", dd, config_.patch_dim(), g(ParamGroup::kRemainingDecoder));

  params_.assign(layout_.total(), 0.0);
  Rng rng(seed);
  std::span<double> p = params_;
  nn::init_linear(p, specs_.patch_embed, rng);
  for (std::size_t i = 0; i < e; ++i) p[specs_.cls + i] = rng.normal(0, 0.02);
  for (const auto& b : specs_.encoder) nn::init_block(p, b, rng);
  nn::init_norm(p, specs_.encoder_norm);
  nn::init_linear(p, specs_.bottleneck, rng);
  nn::init_linear(p, specs_.decoder_embed, rng);
  for (std::size_t i = 0; i < dd; ++i) p[specs_.mask_token + i] = rng.normal(0, 0.02);
  for (const auto& b : specs_.decoder) nn::init_block(p, b, rng);
  nn::init_norm(p, specs_.decoder_norm);
  nn::init_linear(p, specs_.decoder_pred, rng);

  enc_pos_ = nn::sincos_position_table(e, config_.grid());
  dec_pos_ = nn::sincos_position_table(dd, config_.grid());
}

void MaeModel::set_mask_ratio(double ratio) {
  MaeConfig c = config_;
  c.mask_ratio = ratio;
  c.validate();
  config_ = c;
}

std::size_t MaeModel::group_size(ParamGroup g) const {
  std::size_t n = 0;
  for (const auto& s : segments())
    if (s.group == static_cast<int>(g)) n += s.size;
  return n;
}

std::size_t MaeModel::trainable_count(const FreezeMask& mask) const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < kNumParamGroups; ++i)
    if (!mask.frozen[i]) n += group_size(static_cast<ParamGroup>(i));
  return n;
}

double MaeModel::trainable_fraction(const FreezeMask& mask) const {
  return static_cast<double>(trainable_count(mask)) / static_cast<double>(num_params());
}

std::vector<bool> MaeModel::trainable_flags(const FreezeMask& mask) const {
  std::vector<bool> flags(num_params(), false);
  for (const auto& s : segments())
    if (!mask.frozen[static_cast<std::size_t>(s.group)])
      std::fill_n(flags.begin() + static_cast<std::ptrdiff_t>(s.offset), s.size, true);
  return flags;
}

Tensor patchify(const MaeConfig& config, const Tensor& image) {
  const std::size_t c = config.channels, s = config.image_size, p = config.patch_size, grid = config.grid();
  if (image.shape() != std::vector<std::size_t>{c, s, s})
    throw DimensionError("expected image of shape " + shape_string({c, s, s}) + ", got " + shape_string(image.shape()));
  Tensor out = Tensor::matrix(grid * grid, config.patch_dim());
  for (std::size_t gr = 0; gr < grid; ++gr)
    for (std::size_t gc = 0; gc < grid; ++gc)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t r = 0; r < p; ++r)
          for (std::size_t q = 0; q < p; ++q)
            out(gr * grid + gc, (ch * p + r) * p + q) = image[(ch * s + gr * p + r) * s + gc * p + q];
  return out;
}

Tensor unpatchify(const MaeConfig& config, const Tensor& patches) {
  const std::size_t c = config.channels, s = config.image_size, p = config.patch_size, grid = config.grid();
  if (patches.rank() != 2 || patches.rows() != grid * grid || patches.cols() != config.patch_dim())
    throw DimensionError("patch matrix does not match the configuration");
  Tensor image({c, s, s});
  for (std::size_t gr = 0; gr < grid; ++gr)
    for (std::size_t gc = 0; gc < grid; ++gc)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t r = 0; r < p; ++r)
          for (std::size_t q = 0; q < p; ++q)
            image[(ch * s + gr * p + r) * s + gc * p + q] = patches(gr * grid + gc, (ch * p + r) * p + q);
  return image;
}

std::vector<std::size_t> sample_kept_patches(std::size_t num_patches, std::size_t keep, std::uint64_t seed) {
  if (keep > num_patches) throw DomainError("cannot keep more patches than exist");
  std::vector<std::size_t> idx(num_patches);
  std::iota(idx.begin(), idx.end(), 0);
  if (keep < num_patches) {
    Rng rng(seed);
    for (std::size_t i = 0; i < keep; ++i) std::swap(idx[i], idx[i + rng.below(num_patches - i)]);
  }
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  return idx;
}

namespace {

constexpr std::uint64_t kMaskTag = 1;
constexpr std::uint64_t kNoiseTag = 2;

struct EncoderState {
  Tensor patches;  // kept patches only
  std::vector<BlockCache> blocks;
  NormCache norm;
  Tensor z;
};

struct DecoderState {
  Tensor input;  // n x e
  std::vector<BlockCache> blocks;
  NormCache norm;
  Tensor z;
};

Tensor transpose(const Tensor& t) { return t.transposed(); }

// Returns the n x e token-major embedding.
Tensor run_encoder(const MaeModel& m, const Tensor& all_patches, const std::vector<std::size_t>& kept,
                   EncoderState* st) {
  const auto& sp = m.specs();
  const auto p = m.params();
  const std::size_t e = m.config().embed_dim, n = kept.size() + 1;
  Tensor visible = Tensor::matrix(kept.size(), all_patches.cols());
  for (std::size_t j = 0; j < kept.size(); ++j)
    std::copy_n(all_patches.values().data() + kept[j] * all_patches.cols(), all_patches.cols(), &visible(j, 0));
  const Tensor tok = nn::linear_forward(p, sp.patch_embed, visible);
  const Tensor& pos = m.encoder_positions();
  Tensor x = Tensor::matrix(n, e);
  for (std::size_t k = 0; k < e; ++k) x(0, k) = p[sp.cls + k] + pos(0, k);
  for (std::size_t j = 0; j < kept.size(); ++j)
    for (std::size_t k = 0; k < e; ++k) x(j + 1, k) = tok(j, k) + pos(kept[j] + 1, k);
  if (st) st->blocks.resize(sp.encoder.size());
  for (std::size_t b = 0; b < sp.encoder.size(); ++b)
    x = nn::block_forward(p, sp.encoder[b], x, st ? &st->blocks[b] : nullptr);
  Tensor z = nn::norm_forward(p, sp.encoder_norm, x, st ? &st->norm : nullptr);
  Tensor yt = nn::linear_forward(p, sp.bottleneck, z);
  if (st) {
    st->patches = std::move(visible);
    st->z = std::move(z);
  }
  return yt;
}

void encoder_backward(const MaeModel& m, const EncoderState& st, const Tensor& dyt, std::span<double> g) {
  const auto& sp = m.specs();
  const auto p = m.params();
  const std::size_t e = m.config().embed_dim;
  Tensor dx = nn::norm_backward(p, g, sp.encoder_norm, st.norm, nn::linear_backward(p, g, sp.bottleneck, st.z, dyt));
  for (std::size_t b = sp.encoder.size(); b-- > 0;) dx = nn::block_backward(p, g, sp.encoder[b], st.blocks[b], dx);
  for (std::size_t k = 0; k < e; ++k) g[sp.cls + k] += dx(0, k);
  Tensor dtok = Tensor::matrix(dx.rows() - 1, e);
  std::copy(dx.values().begin() + static_cast<std::ptrdiff_t>(e), dx.values().end(), dtok.values().begin());
  nn::linear_backward(p, g, sp.patch_embed, st.patches, dtok);
}

// Decoder input: tokens at the class slot and kept positions, mask tokens
// elsewhere. Returns predicted patches for all P positions.
Tensor run_decoder(const MaeModel& m, const Tensor& yt, const std::vector<std::size_t>& kept, DecoderState* st) {
  const auto& sp = m.specs();
  const auto p = m.params();
  const std::size_t dd = m.config().decoder_dim, np = m.config().num_patches();
  const Tensor d0 = nn::linear_forward(p, sp.decoder_embed, yt);
  const Tensor& pos = m.decoder_positions();
  Tensor x = Tensor::matrix(np + 1, dd);
  for (std::size_t r = 1; r <= np; ++r)
    for (std::size_t k = 0; k < dd; ++k) x(r, k) = p[sp.mask_token + k];
  for (std::size_t k = 0; k < dd; ++k) x(0, k) = d0(0, k);
  for (std::size_t j = 0; j < kept.size(); ++j)
    for (std::size_t k = 0; k < dd; ++k) x(kept[j] + 1, k) = d0(j + 1, k);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += pos[i];
  if (st) st->blocks.resize(sp.decoder.size());
  for (std::size_t b = 0; b < sp.decoder.size(); ++b)
    x = nn::block_forward(p, sp.decoder[b], x, st ? &st->blocks[b] : nullptr);
  Tensor z = nn::norm_forward(p, sp.decoder_norm, x, st ? &st->norm : nullptr);
  Tensor pred = nn::linear_forward(p, sp.decoder_pred, z);
  if (st) {
    st->input = yt;
    st->z = std::move(z);
  }
  Tensor out = Tensor::matrix(np, pred.cols());
  std::copy(pred.values().begin() + static_cast<std::ptrdiff_t>(pred.cols()), pred.values().end(),
            out.values().begin());
  return out;
}

// dpred is P x patch_dim; returns d(yt).
Tensor decoder_backward(const MaeModel& m, const DecoderState& st, const std::vector<std::size_t>& kept,
                        const Tensor& dpred, std::span<double> g) {
  const auto& sp = m.specs();
  const auto p = m.params();
  const std::size_t dd = m.config().decoder_dim, np = m.config().num_patches();
  Tensor dfull = Tensor::matrix(np + 1, dpred.cols());
  std::copy(dpred.values().begin(), dpred.values().end(), dfull.values().begin() + static_cast<std::ptrdiff_t>(dpred.cols()));
  Tensor dx = nn::norm_backward(p, g, sp.decoder_norm, st.norm, nn::linear_backward(p, g, sp.decoder_pred, st.z, dfull));
  for (std::size_t b = sp.decoder.size(); b-- > 0;) dx = nn::block_backward(p, g, sp.decoder[b], st.blocks[b], dx);
  std::vector<bool> visible(np + 1, false);
  visible[0] = true;
  for (auto k : kept) visible[k + 1] = true;
  for (std::size_t r = 1; r <= np; ++r)
    if (!visible[r])
      for (std::size_t k = 0; k < dd; ++k) g[sp.mask_token + k] += dx(r, k);
  Tensor dd0 = Tensor::matrix(kept.size() + 1, dd);
  for (std::size_t k = 0; k < dd; ++k) dd0(0, k) = dx(0, k);
  for (std::size_t j = 0; j < kept.size(); ++j)
    for (std::size_t k = 0; k < dd; ++k) dd0(j + 1, k) = dx(kept[j] + 1, k);
  return nn::linear_backward(p, g, sp.decoder_embed, st.input, dd0);
}

struct Visibility {
  std::vector<std::size_t> kept, masked;
};

Visibility visibility(const MaeConfig& c, std::uint64_t seed, double ratio) {
  Visibility v;
  v.kept = sample_kept_patches(c.num_patches(), c.kept_patches(ratio), derive_seed(seed, kMaskTag));
  std::vector<bool> vis(c.num_patches(), false);
  for (auto k : v.kept) vis[k] = true;
  for (std::size_t i = 0; i < c.num_patches(); ++i)
    if (!vis[i]) v.masked.push_back(i);
  return v;
}

// Rows scored by the distortion: masked patches, or all of them when none
// is masked.
const std::vector<std::size_t>& scored_rows(const Visibility& v, std::vector<std::size_t>& all, std::size_t np) {
  if (!v.masked.empty()) return v.masked;
  all.resize(np);
  std::iota(all.begin(), all.end(), 0);
  return all;
}

void check_density(const MaeModel& m, const FactorizedDensity* d) {
  if (d && static_cast<std::size_t>(d->channels()) != m.config().embed_dim)
    throw DimensionError("density has " + std::to_string(d->channels()) + " channels, model embeds " +
                         std::to_string(m.config().embed_dim));
}

LossGradients loss_impl(const MaeModel& m, const Tensor& image, const FactorizedDensity* density, double lambda,
                        std::uint64_t seed, bool want_grad, bool quantize = false) {
  if (!(lambda >= 0)) throw DomainError("lambda must be non-negative");
  check_density(m, density);
  const MaeConfig& c = m.config();
  const Tensor patches = patchify(c, image);
  const Visibility vis = visibility(c, seed, c.mask_ratio);
  EncoderState est;
  const Tensor yt = run_encoder(m, patches, vis.kept, want_grad ? &est : nullptr);

  LossGradients out;
  Tensor noisy_t = yt;
  RateGradients rg;
  if (density) {
    const Tensor noisy = quantize ? round_quantize(transpose(yt)).to_tensor()
                                  : add_uniform_noise(transpose(yt), derive_seed(seed, kNoiseTag));
    if (want_grad) {
      rg = rate_gradients(*density, noisy);
      out.terms.rate = rg.bits;
    } else {
      out.terms.rate = rate_bits(*density, noisy);
    }
    noisy_t = transpose(noisy);
  }
  DecoderState dst;
  const Tensor pred = run_decoder(m, noisy_t, vis.kept, want_grad ? &dst : nullptr);
  std::vector<std::size_t> all;
  const auto& rows = scored_rows(vis, all, c.num_patches());
  const double count = static_cast<double>(rows.size() * c.patch_dim());
  double d = 0;
  for (auto r : rows)
    for (std::size_t k = 0; k < c.patch_dim(); ++k) {
      const double diff = pred(r, k) - patches(r, k);
      d += diff * diff;
    }
  out.terms.distortion = d / count;
  out.terms.loss = lambda * out.terms.distortion + out.terms.rate;
  if (!want_grad) return out;

  out.model_grad.assign(m.num_params(), 0.0);
  Tensor dpred = Tensor::matrix(pred.rows(), pred.cols());
  for (auto r : rows)
    for (std::size_t k = 0; k < c.patch_dim(); ++k) dpred(r, k) = lambda * 2.0 * (pred(r, k) - patches(r, k)) / count;
  Tensor dyt = decoder_backward(m, dst, vis.kept, dpred, out.model_grad);
  if (density) {
    for (std::size_t i = 0; i < dyt.rows(); ++i)
      for (std::size_t k = 0; k < dyt.cols(); ++k) dyt(i, k) += rg.dy(k, i);
    out.density_grad = std::move(rg.param_grad);
  }
  encoder_backward(m, est, dyt, out.model_grad);
  return out;
}

void accumulate(LossGradients& into, const LossGradients& g) {
  into.terms.loss += g.terms.loss;
  into.terms.distortion += g.terms.distortion;
  into.terms.rate += g.terms.rate;
  if (into.model_grad.empty()) into.model_grad.assign(g.model_grad.size(), 0.0);
  for (std::size_t i = 0; i < g.model_grad.size(); ++i) into.model_grad[i] += g.model_grad[i];
  if (into.density_grad.empty()) into.density_grad.assign(g.density_grad.size(), 0.0);
  for (std::size_t i = 0; i < g.density_grad.size(); ++i) into.density_grad[i] += g.density_grad[i];
}

void check_batch(std::span<const Tensor> images, std::span<const std::uint64_t> seeds) {
  if (images.size() != seeds.size()) throw DimensionError("need one seed per image");
  if (images.empty()) throw DomainError("empty batch");
}

}  // namespace

ForwardResult forward(const MaeModel& model, const Tensor& image, std::uint64_t seed, std::optional<double> mask_ratio) {
  const MaeConfig& c = model.config();
  const Tensor patches = patchify(c, image);
  const Visibility vis = visibility(c, seed, mask_ratio.value_or(c.mask_ratio));
  const Tensor yt = run_encoder(model, patches, vis.kept, nullptr);
  ForwardResult r;
  r.reconstruction = unpatchify(c, run_decoder(model, yt, vis.kept, nullptr));
  r.y = transpose(yt);
  r.kept = vis.kept;
  r.masked = vis.masked;
  return r;
}

Tensor embed(const MaeModel& model, const Tensor& image, std::uint64_t seed, std::optional<double> mask_ratio) {
  const MaeConfig& c = model.config();
  const Visibility vis = visibility(c, seed, mask_ratio.value_or(c.mask_ratio));
  return transpose(run_encoder(model, patchify(c, image), vis.kept, nullptr));
}

LossTerms compression_loss(const MaeModel& model, const Tensor& image, const FactorizedDensity* density, double lambda,
                           std::uint64_t seed) {
  return loss_impl(model, image, density, lambda, seed, false).terms;
}

LossTerms quantized_loss(const MaeModel& model, const Tensor& image, const FactorizedDensity& density, double lambda,
                         std::uint64_t seed) {
  return loss_impl(model, image, &density, lambda, seed, false, true).terms;
}

LossGradients compression_loss_gradients(const MaeModel& model, const Tensor& image, const FactorizedDensity* density,
                                         double lambda, std::uint64_t seed) {
  return loss_impl(model, image, density, lambda, seed, true);
}

LossGradients batch_gradients(const MaeModel& model, const FactorizedDensity* density, std::span<const Tensor> images,
                              std::span<const std::uint64_t> seeds, double lambda) {
  check_batch(images, seeds);
  std::vector<LossGradients> per(images.size());
  std::vector<std::exception_ptr> errors(images.size());
  const auto count = static_cast<std::ptrdiff_t>(images.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      per[i] = loss_impl(model, images[i], density, lambda, seeds[i], true);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  LossGradients sum;
  for (const auto& g : per) accumulate(sum, g);
  return sum;
}

LossGradients batch_gradients_serial(const MaeModel& model, const FactorizedDensity* density,
                                     std::span<const Tensor> images, std::span<const std::uint64_t> seeds,
                                     double lambda) {
  check_batch(images, seeds);
  LossGradients sum;
  for (std::size_t i = 0; i < images.size(); ++i)
    accumulate(sum, loss_impl(model, images[i], density, lambda, seeds[i], true));
  return sum;
}

namespace {

struct Adam {
  std::vector<double> m, v;
  std::size_t t = 0;
  explicit Adam(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
  void step(std::span<double> params, std::span<const double> grad, double lr, const std::vector<bool>* active) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++t;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (active && !(*active)[i]) continue;
      m[i] = b1 * m[i] + (1 - b1) * grad[i];
      v[i] = b2 * v[i] + (1 - b2) * grad[i] * grad[i];
      params[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
};

}  // namespace

TrainResult train(MaeModel& model, FactorizedDensity* density, std::span<const Tensor> images,
                  const TrainOptions& options) {
  if (images.empty()) throw DomainError("training needs at least one image");
  if (options.batch_size == 0) throw DomainError("batch size must be positive");
  if (!(options.lr > 0) || !(options.density_lr > 0)) throw DomainError("learning rates must be positive");
  check_density(model, density);
  const std::vector<bool> active = model.trainable_flags(options.freeze);
  Adam model_opt(model.num_params());
  Adam density_opt(density ? density->num_params() : 0);
  Rng picker(derive_seed(options.seed, 0x5eed));
  TrainResult result;
  result.trace.reserve(options.steps);
  std::vector<Tensor> batch(options.batch_size);
  std::vector<std::uint64_t> seeds(options.batch_size);
  const double inv = 1.0 / static_cast<double>(options.batch_size);
  for (std::size_t step = 0; step < options.steps; ++step) {
    for (std::size_t i = 0; i < options.batch_size; ++i) {
      batch[i] = images[picker.below(images.size())];
      seeds[i] = picker.next_u64();
    }
    LossGradients g = batch_gradients(model, density, batch, seeds, options.lambda);
    LossTerms mean;
    mean.distortion = g.terms.distortion * inv;
    mean.rate = g.terms.rate * inv;
    mean.loss = options.lambda * mean.distortion + mean.rate;
    if (!std::isfinite(mean.loss)) throw TrainingError(step, "loss is not finite");
    for (double& v : g.model_grad) v *= inv;
    for (double& v : g.density_grad) v *= inv;
    model_opt.step(model.params(), g.model_grad, options.lr, &active);
    if (density) density_opt.step(density->params(), g.density_grad, options.density_lr, nullptr);
    result.trace.push_back(mean);
  }
  return result;
}

Tensor decoder_prefix(const MaeModel& model, const Tensor& y) {
  const MaeConfig& c = model.config();
  if (y.rank() != 2 || y.rows() != c.embed_dim || y.cols() != c.num_patches() + 1)
    throw DimensionError("prefix expects an unmasked " + shape_string({c.embed_dim, c.num_patches() + 1}) +
                         " embedding, got " + shape_string(y.shape()));
  const auto& sp = model.specs();
  Tensor x = nn::linear_forward(model.params(), sp.decoder_embed, transpose(y));
  const Tensor& pos = model.decoder_positions();
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += pos[i];
  return nn::block_forward(model.params(), sp.decoder.front(), x, nullptr);
}

std::vector<double> embed_backward(const MaeModel& model, const Tensor& image, const Tensor& dy) {
  const MaeConfig& c = model.config();
  std::vector<std::size_t> kept(c.num_patches());
  std::iota(kept.begin(), kept.end(), 0);
  if (dy.rank() != 2 || dy.rows() != c.embed_dim || dy.cols() != kept.size() + 1)
    throw DimensionError("embedding gradient has the wrong shape");
  EncoderState st;
  run_encoder(model, patchify(c, image), kept, &st);
  std::vector<double> g(model.num_params(), 0.0);
  encoder_backward(model, st, transpose(dy), g);
  return g;
}

namespace {
constexpr char kCheckpointMagic[4] = {'M', 'A', 'E', '1'};
constexpr std::uint8_t kCheckpointVersion = 1;
}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const MaeModel& model) {
  const MaeConfig& c = model.config();
  ByteWriter w;
  w.raw(kCheckpointMagic, 4);
  w.u8(kCheckpointVersion);
  w.u16(static_cast<std::uint16_t>(c.image_size));
  w.u8(static_cast<std::uint8_t>(c.channels));
  w.u16(static_cast<std::uint16_t>(c.patch_size));
  w.u16(static_cast<std::uint16_t>(c.embed_dim));
  w.u8(static_cast<std::uint8_t>(c.encoder_depth));
  w.u8(static_cast<std::uint8_t>(c.encoder_heads));
  w.u8(static_cast<std::uint8_t>(c.mlp_ratio));
  w.u16(static_cast<std::uint16_t>(c.decoder_dim));
  w.u8(static_cast<std::uint8_t>(c.decoder_depth));
  w.u8(static_cast<std::uint8_t>(c.decoder_heads));
  w.f64(c.mask_ratio);
  w.u64(model.num_params());
  for (double v : model.params()) w.f64(v);
  return w.take();
}

MaeModel decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  const auto magic = r.bytes(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), kCheckpointMagic)) throw FormatError("magic", "not a model checkpoint");
  if (r.u8("version") != kCheckpointVersion) throw FormatError("version", "unsupported checkpoint version");
  MaeConfig c;
  c.image_size = r.u16("image_size");
  c.channels = r.u8("channels");
  c.patch_size = r.u16("patch_size");
  c.embed_dim = r.u16("embed_dim");
  c.encoder_depth = r.u8("encoder_depth");
  c.encoder_heads = r.u8("encoder_heads");
  c.mlp_ratio = r.u8("mlp_ratio");
  c.decoder_dim = r.u16("decoder_dim");
  c.decoder_depth = r.u8("decoder_depth");
  c.decoder_heads = r.u8("decoder_heads");
  c.mask_ratio = r.f64("mask_ratio");
  try {
    c.validate();
  } catch (const Error& e) {
    throw FormatError("config", e.what());
  }
  MaeModel model(c);
  if (r.u64("param_count") != model.num_params()) throw FormatError("param_count", "does not match the configuration");
  for (double& v : model.params()) v = r.f64("params");
  if (r.remaining() != 0) throw FormatError("params", "trailing bytes after parameters");
  return model;
}

}  // namespace embcodec
