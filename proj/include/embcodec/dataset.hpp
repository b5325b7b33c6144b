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

#ifndef EMBCODEC_DATASET_HPP_
#define EMBCODEC_DATASET_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "embcodec/tensor.hpp"

namespace embcodec {

struct LabeledImages {
  std::vector<Tensor> images;  // each C x H x W, values in [0, 1]
  std::vector<int> labels;
  std::vector<std::string> names;  // file stems, parallel to images
  std::size_t size() const noexcept { return images.size(); }
};

struct Dataset {
  LabeledImages train;
  LabeledImages eval;
  int num_classes = 0;
};

/// Seeded blob/texture task. Class k places a bright Gaussian blob near
/// anchor k, the anchors sitting evenly on a circle around the image centre.
/// Every image also gets a random-orientation grating, 1 to 3 weaker
/// distractor blobs and pixel noise. `signal` scales the class blob, so it
/// sets the difficulty together with `position_jitter` and `noise`.
struct SyntheticOptions {
  std::size_t image_size = 16;
  std::size_t channels = 1;
  int num_classes = 3;
  std::size_t train_count = 600;
  std::size_t eval_count = 300;
  double signal = 0.4;
  double position_jitter = 1.5;  // pixels at size 16, scaled with the image
  double texture = 0.08;         // grating amplitude
  double noise = 0.08;
  std::uint64_t seed = 0;
};

Dataset generate_synthetic(const SyntheticOptions& options);

/// Writes one TNSR file per image (f32) plus labels.csv with columns
/// file,label,split.
void save_dataset(const std::string& dir, const Dataset& data);
/// Reads a directory written by save_dataset. Throws IoError or FormatError.
/// With images = false the files must be d x n token matrices (e.g. stored
/// embeddings) and are returned unchanged.
Dataset load_dataset(const std::string& dir, bool images = true);

}  // namespace embcodec

#endif  // EMBCODEC_DATASET_HPP_
