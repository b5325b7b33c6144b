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

#ifndef EMBCODEC_BENCH_PIPELINE_HPP_
#define EMBCODEC_BENCH_PIPELINE_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "embcodec/dataset.hpp"
#include "embcodec/entropy_model.hpp"
#include "embcodec/mae.hpp"
#include "embcodec/probe.hpp"

namespace embcodec {

/// One row of the rate vs. accuracy table.
///
/// method is "NEC", "NEC+prefix" (same archives, probe behind the first
/// decoder block), "UQE-<b>" for b in 2..8, "UQE-f16", "UQE-f32", or
/// "RDC-<depth>". setting is the lambda for NEC rows and the bit width or
/// depth otherwise. distortion_mse depends on the method: quantized MAE
/// reconstruction error for NEC, embedding-domain error for UQE, pixel error
/// for RDC.
struct RDPoint {
  static constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

  std::string method;
  std::string setting;
  std::uint64_t seed = 0;
  double bits_per_sample = kNaN;
  double bytes_per_sample = kNaN;
  double distortion_mse = kNaN;
  double probe_accuracy = kNaN;
  double analytic_rate_bits = kNaN;  // NEC only: density code length of the symbols
  double one_time_cost_bytes = 0.0;  // NEC: density blob shipped once
  double lambda = kNaN;
  std::size_t lambda_rank = 0;       // position of lambda in the sweep grid
  std::size_t symbols = 0;           // symbols coded over the eval split
  bool pareto = false;
  std::string error;                 // empty when the row succeeded

  bool ok() const noexcept { return error.empty(); }
};

using LogFn = std::function<void(const std::string&)>;

struct BenchOptions {
  MaeConfig model;
  // Backbone pretraining (plain masked autoencoding).
  std::size_t pretrain_steps = 1500;
  double pretrain_lr = 1e-3;
  std::size_t batch_size = 16;
  // Per-lambda adaptation with the adaptation freeze mask.
  std::size_t adapt_steps = 600;
  double adapt_lr = 2e-3;
  double density_lr = 1e-2;
  double adapt_mask_ratio = 0.0;
  std::size_t density_fit_steps = 500;
  std::size_t calibration_images = 64;
  /// Explicit lambdas; when empty, lambda_multipliers scale the per-seed
  /// balance constant c = R0 / D0 of the pretrained backbone.
  std::vector<double> lambdas;
  std::vector<double> lambda_multipliers = {0.01, 0.1, 1.0, 10.0, 100.0};
  std::vector<int> uqe_bits = {2, 3, 5, 8, 16, 32};
  std::vector<int> rdc_depths = {8, 16};
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  ProbeConfig probe;
  bool prefix = true;
  /// Count whole archives (header, embedded tables, CRC) instead of payload
  /// bytes only.
  bool fully_loaded = false;
  int precision_bits = 16;
  // RDC consumer: full fine-tuning of the backbone plus a linear head.
  std::size_t finetune_epochs = 6;
  std::size_t finetune_batch = 32;
  double finetune_lr = 5e-4;
  double head_lr = 1e-2;

  void validate() const;
};

struct Backbone {
  MaeModel model;
  FactorizedDensity density;  // fitted to the backbone's noisy embeddings
  double rate0 = 0.0;          // mean bits per image before adaptation
  double distortion0 = 0.0;    // mean masked-patch MSE at the pretraining mask ratio
  double lambda_scale = 1.0;   // rate0 / distortion0
};

/// Pretrains the backbone on the train split and calibrates the density.
Backbone pretrain_backbone(const Dataset& data, const BenchOptions& options, std::uint64_t seed);

std::vector<double> lambda_grid(const Backbone& backbone, const BenchOptions& options);

struct AdaptedModel {
  MaeModel model;
  FactorizedDensity density;
  TrainResult result;
};

/// Rate-distortion adaptation of a copy of the backbone at one lambda.
AdaptedModel adapt(const Backbone& backbone, const Dataset& data, double lambda, const BenchOptions& options,
                   std::uint64_t seed);

struct RdEstimate {
  double rate_bits = 0.0;   // mean over images
  double distortion = 0.0;  // mean over images
};
/// Quantized rate and distortion, averaged over `images` with fixed seeds.
RdEstimate evaluate_rd(const MaeModel& model, const FactorizedDensity& density, std::span<const Tensor> images,
                       std::uint64_t seed);

/// Embeds both splits, codes every sample through a NEC archive, checks the
/// receiver's symbols against the sender's and probes the decoded symbols.
/// Returns the NEC row and, with options.prefix, the NEC+prefix row.
std::vector<RDPoint> run_nec(const MaeModel& model, const FactorizedDensity& density, const Dataset& data,
                             double lambda, const BenchOptions& options, std::uint64_t seed);
RDPoint run_uqe(const MaeModel& model, const Dataset& data, int bits, const BenchOptions& options,
                std::uint64_t seed);
RDPoint run_rdc(const MaeModel& model, const Dataset& data, int bit_depth, const BenchOptions& options,
                std::uint64_t seed);

/// All methods and settings for every seed. Jobs run in parallel; rows come
/// back sorted by method, then bits, then seed, with the Pareto front (per
/// seed, over all methods) flagged. A failing job yields a row with its error
/// and the sweep carries on.
std::vector<RDPoint> sweep(const Dataset& data, const BenchOptions& options, const LogFn& log = {});

/// Orders rows and sets the pareto flags.
void finalize_points(std::vector<RDPoint>& points);

/// The fixed nine-column table.
std::string rd_csv(std::span<const RDPoint> points);
/// Same columns plus lambda_rank, pareto and error.
std::string rd_pareto_csv(std::span<const RDPoint> points);

/// Seed-averaged view of one (method, setting) cell. NEC cells are keyed by
/// lambda rank because the per-seed lambdas differ when auto-scaled.
struct RDSummary {
  std::string method;
  std::string setting;
  std::size_t lambda_rank = 0;
  std::size_t count = 0;  // successful seeds
  double bits_per_sample = 0.0;
  double bytes_per_sample = 0.0;
  double distortion_mse = 0.0;
  double analytic_rate_bits = 0.0;
  double accuracy = 0.0;
  double accuracy_min = 0.0;
  double accuracy_max = 0.0;
};
/// Means over successful rows, ordered by method then mean bits.
std::vector<RDSummary> summarize(std::span<const RDPoint> points);

/// Raw-feature helpers shared with the CLI.
std::vector<Tensor> embed_split(const MaeModel& model, std::span<const Tensor> images);
Tensor prefix_tokens(const MaeModel& model, const Tensor& y);

}  // namespace embcodec

#endif  // EMBCODEC_BENCH_PIPELINE_HPP_
