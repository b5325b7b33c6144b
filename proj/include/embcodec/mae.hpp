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

#ifndef EMBCODEC_MAE_HPP_
#define EMBCODEC_MAE_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "embcodec/entropy_model.hpp"
#include "embcodec/layers.hpp"
#include "embcodec/tensor.hpp"

namespace embcodec {

struct MaeConfig {
  std::size_t image_size = 16;
  std::size_t channels = 1;
  std::size_t patch_size = 4;
  std::size_t embed_dim = 32;
  std::size_t encoder_depth = 2;
  std::size_t encoder_heads = 2;
  std::size_t mlp_ratio = 4;
  std::size_t decoder_dim = 16;
  std::size_t decoder_depth = 1;
  std::size_t decoder_heads = 2;
  double mask_ratio = 0.75;

  /// Throws DimensionError or DomainError on an inconsistent configuration.
  void validate() const;
  std::size_t grid() const noexcept { return image_size / patch_size; }
  std::size_t num_patches() const noexcept { return grid() * grid(); }
  std::size_t patch_dim() const noexcept { return channels * patch_size * patch_size; }
  /// Patches kept visible at mask ratio `ratio`: floor(P (1 - ratio)).
  std::size_t kept_patches(double ratio) const;
  /// Columns of the embedding: kept patches plus the class token.
  std::size_t tokens(double ratio) const { return kept_patches(ratio) + 1; }
  friend bool operator==(const MaeConfig&, const MaeConfig&) = default;
};

enum class ParamGroup : int {
  kEncoderPatchEmbed = 0,
  kEncoderBlocks = 1,
  kFinalEncoderLayer = 2,
  kDecoderPatchEmbed = 3,
  kFirstDecoderLayer = 4,
  kRemainingDecoder = 5,
};
constexpr std::size_t kNumParamGroups = 6;
const char* group_name(ParamGroup g) noexcept;

struct FreezeMask {
  std::array<bool, kNumParamGroups> frozen{};
  bool is_frozen(ParamGroup g) const noexcept { return frozen[static_cast<std::size_t>(g)]; }
  /// Everything frozen except the encoder patch embedding, the final encoder
  /// layer, the decoder patch embedding and the first decoder block.
  static FreezeMask adaptation();
  static FreezeMask none() { return {}; }
  static FreezeMask all();
  /// "adaptation", "none" or "all".
  static FreezeMask parse(const std::string& name);
  friend bool operator==(const FreezeMask&, const FreezeMask&) = default;
};

/// Small masked autoencoder over square images (C x H x W tensors).
///
/// Encoder: patch embedding, fixed sine-cosine positions, a learned class
/// token, pre-norm transformer blocks, then the final encoder layer (norm and
/// a linear bottleneck) which emits the e x n embedding y with the class token
/// in column 0. Decoder: linear embedding of y, mask tokens for hidden
/// patches, transformer blocks, norm and a per-patch pixel predictor.
class MaeModel {
 public:
  explicit MaeModel(const MaeConfig& config, std::uint64_t seed = 0);

  const MaeConfig& config() const noexcept { return config_; }
  /// The mask ratio is the only setting that does not change the parameter
  /// layout, so it may be changed after construction (e.g. for adaptation).
  void set_mask_ratio(double ratio);
  std::span<double> params() noexcept { return params_; }
  std::span<const double> params() const noexcept { return params_; }
  std::size_t num_params() const noexcept { return params_.size(); }
  const std::vector<nn::Segment>& segments() const noexcept { return layout_.segments(); }
  std::size_t group_size(ParamGroup g) const;
  std::size_t trainable_count(const FreezeMask& mask) const;
  double trainable_fraction(const FreezeMask& mask) const;
  /// Per-parameter flag, true where the mask leaves the parameter trainable.
  std::vector<bool> trainable_flags(const FreezeMask& mask) const;

  friend bool operator==(const MaeModel& a, const MaeModel& b) {
    return a.config_ == b.config_ && a.params_ == b.params_;
  }

  // Layer offsets; used by the forward and backward passes.
  struct Specs {
    nn::LinearSpec patch_embed;
    std::size_t cls = 0;
    std::vector<nn::BlockSpec> encoder;
    nn::NormSpec encoder_norm;
    nn::LinearSpec bottleneck;
    nn::LinearSpec decoder_embed;
    std::size_t mask_token = 0;
    std::vector<nn::BlockSpec> decoder;
    nn::NormSpec decoder_norm;
    nn::LinearSpec decoder_pred;
  };
  const Specs& specs() const noexcept { return specs_; }
  const Tensor& encoder_positions() const noexcept { return enc_pos_; }
  const Tensor& decoder_positions() const noexcept { return dec_pos_; }

 private:
  MaeConfig config_;
  nn::ParamLayout layout_;
  Specs specs_;
  std::vector<double> params_;
  Tensor enc_pos_, dec_pos_;
};

/// Splits a C x H x W image into P x (C p p) patches, raster order.
Tensor patchify(const MaeConfig& config, const Tensor& image);
Tensor unpatchify(const MaeConfig& config, const Tensor& patches);

/// Seeded uniform sampling without replacement; returns the sorted indices of
/// the kept patches.
std::vector<std::size_t> sample_kept_patches(std::size_t num_patches, std::size_t keep, std::uint64_t seed);

struct ForwardResult {
  Tensor y;                  // e x n, class token in column 0
  Tensor reconstruction;     // C x H x W image assembled from predicted patches
  std::vector<std::size_t> kept;
  std::vector<std::size_t> masked;
};

/// Runs encoder and decoder without noise. `mask_ratio` overrides the
/// configured ratio when set.
ForwardResult forward(const MaeModel& model, const Tensor& image, std::uint64_t seed,
                      std::optional<double> mask_ratio = std::nullopt);

/// Inference-path embedding: the encoder half of forward.
Tensor embed(const MaeModel& model, const Tensor& image, std::uint64_t seed,
             std::optional<double> mask_ratio = std::nullopt);

struct LossTerms {
  double loss = 0.0;
  double distortion = 0.0;  // MSE over masked patches (all patches when none are masked)
  double rate = 0.0;        // bits of the noisy embedding under the density
};

/// loss = lambda * D + R with R evaluated on y plus seeded uniform noise and
/// the decoder fed the same noisy embedding. A null density gives R = 0 and
/// no noise (plain masked-autoencoder training).
LossTerms compression_loss(const MaeModel& model, const Tensor& image, const FactorizedDensity* density,
                           double lambda, std::uint64_t seed);

/// Same terms with hard rounding in place of the noise: the rate is the code
/// length of the integer symbols and the decoder sees what a receiver gets.
LossTerms quantized_loss(const MaeModel& model, const Tensor& image, const FactorizedDensity& density, double lambda,
                         std::uint64_t seed);

struct LossGradients {
  LossTerms terms;
  std::vector<double> model_grad;
  std::vector<double> density_grad;
};
LossGradients compression_loss_gradients(const MaeModel& model, const Tensor& image,
                                         const FactorizedDensity* density, double lambda, std::uint64_t seed);

/// Sum of per-image gradients and loss terms over a batch. Images are
/// processed in parallel into private buffers and reduced in index order, so
/// the result does not depend on the thread count.
LossGradients batch_gradients(const MaeModel& model, const FactorizedDensity* density,
                              std::span<const Tensor> images, std::span<const std::uint64_t> seeds,
                              double lambda);
LossGradients batch_gradients_serial(const MaeModel& model, const FactorizedDensity* density,
                                     std::span<const Tensor> images, std::span<const std::uint64_t> seeds,
                                     double lambda);

struct TrainOptions {
  std::size_t steps = 200;
  std::size_t batch_size = 16;
  double lr = 1e-3;
  double density_lr = 1e-2;
  double lambda = 1.0;
  FreezeMask freeze;
  std::uint64_t seed = 0;
};

struct TrainResult {
  std::vector<LossTerms> trace;  // batch means per step
};

/// Adam on every unfrozen model parameter and, when given, every density
/// parameter. Frozen parameters are never written. Throws TrainingError with
/// the step index when the loss stops being finite.
TrainResult train(MaeModel& model, FactorizedDensity* density, std::span<const Tensor> images,
                  const TrainOptions& options);

/// Decoder embedding and first decoder block applied to a (possibly
/// dequantized) embedding: the "prefix" a consumer can run before its head.
/// Assumes no masking, so y must have P + 1 columns. Returns n x decoder_dim.
Tensor decoder_prefix(const MaeModel& model, const Tensor& y);

/// Gradient of a scalar w.r.t. the model parameters given dL/dy for the
/// unmasked embedding of `image`; used to fine-tune the encoder on a task.
std::vector<double> embed_backward(const MaeModel& model, const Tensor& image, const Tensor& dy);

// Checkpoint: "MAE1", u8 version, config block, u64 count, f64 parameters.
std::vector<std::uint8_t> encode_checkpoint(const MaeModel& model);
MaeModel decode_checkpoint(std::span<const std::uint8_t> bytes);

}  // namespace embcodec

#endif  // EMBCODEC_MAE_HPP_
