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

#ifndef EMBCODEC_PROBE_HPP_
#define EMBCODEC_PROBE_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "embcodec/tensor.hpp"

namespace embcodec {

enum class Pooling { kMean, kAttention };
Pooling parse_pooling(const std::string& name);
const char* pooling_name(Pooling p) noexcept;

/// Linear probe on frozen token features. Only the pooling query (attention
/// pooling) and the head are trained; the features are plain inputs.
struct ProbeConfig {
  Pooling pooling = Pooling::kMean;
  std::size_t epochs = 300;
  double lr = 0.05;
  std::size_t batch_size = 0;  // 0 means full batch
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;
};

struct ProbeResult {
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
  std::vector<int> predictions;  // eval split
};

/// Token matrices are d x n with the class token in column 0, which the
/// pooling skips. Features are z-scored with train-split statistics, then a
/// softmax-regression head is fitted with Adam on cross-entropy.
///
/// Throws DegenerateInputError when the train labels hold fewer than two
/// classes, DimensionError on inconsistent shapes and RangeError on labels
/// outside [0, num_classes).
ProbeResult train_probe(std::span<const Tensor> train_tokens, std::span<const int> train_labels,
                        std::span<const Tensor> eval_tokens, std::span<const int> eval_labels, int num_classes,
                        const ProbeConfig& config);

}  // namespace embcodec

#endif  // EMBCODEC_PROBE_HPP_
