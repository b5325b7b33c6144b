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

#include "embcodec/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include <fmt/format.h>

#include "embcodec/error.hpp"
#include "embcodec/random.hpp"

namespace embcodec {
namespace {

namespace fs = std::filesystem;

Tensor make_image(const SyntheticOptions& o, int label, Rng& rng) {
  const std::size_t s = o.image_size;
  const double size = static_cast<double>(s);
  const double unit = size / 16.0;
  const double pi = std::numbers::pi;
  Tensor img({o.channels, s, s});

  const double angle = 2.0 * pi * label / o.num_classes + pi / 4.0;
  const double centre = (size - 1.0) / 2.0;
  const double cx = centre + 0.3 * size * std::cos(angle) + rng.normal(0.0, o.position_jitter * unit);
  const double cy = centre + 0.3 * size * std::sin(angle) + rng.normal(0.0, o.position_jitter * unit);
  const double camp = o.signal * rng.uniform(0.7, 1.3);
  const double csig = rng.uniform(1.5, 3.0) * unit;

  const double theta = rng.uniform(0.0, pi);
  const double freq = rng.uniform(0.12, 0.25) / unit;
  const double phase = rng.uniform(0.0, 2.0 * pi);
  const double ct = std::cos(theta), st = std::sin(theta);

  struct Blob {
    double x, y, sigma, amp;
  };
  std::vector<Blob> blobs(1 + rng.below(3));
  for (auto& b : blobs) {
    b.x = rng.uniform(0.0, size);
    b.y = rng.uniform(0.0, size);
    b.sigma = rng.uniform(1.5, 4.0) * unit;
    b.amp = rng.uniform(-0.3, 0.3);
  }
  blobs.push_back({cx, cy, csig, camp});
  const double base = rng.uniform(0.35, 0.55);

  for (std::size_t c = 0; c < o.channels; ++c) {
    const double gain = c == 0 ? 1.0 : rng.uniform(0.7, 1.3);
    for (std::size_t r = 0; r < s; ++r) {
      for (std::size_t q = 0; q < s; ++q) {
        const double x = static_cast<double>(q), y = static_cast<double>(r);
        double v = base + o.texture * std::sin(2.0 * pi * freq * (x * ct + y * st) + phase);
        for (const auto& b : blobs) {
          const double dx = x - b.x, dy = y - b.y;
          v += gain * b.amp * std::exp(-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma));
        }
        v += rng.normal(0.0, o.noise);
        // Stored at f32 precision so a save/load round trip is exact.
        img[(c * s + r) * s + q] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return img;
}

void fill_split(const SyntheticOptions& o, std::size_t count, const char* prefix, std::uint64_t seed,
                LabeledImages& out) {
  Rng rng(seed);
  out.images.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    // Labels cycle through the classes so every split stays balanced.
    const int label = static_cast<int>(i % static_cast<std::size_t>(o.num_classes));
    out.images.push_back(make_image(o, label, rng));
    out.labels.push_back(label);
    out.names.push_back(fmt::format("{}_{:05d}", prefix, i));
  }
}

}  // namespace

Dataset generate_synthetic(const SyntheticOptions& o) {
  if (o.num_classes < 2) throw DomainError("synthetic task needs at least 2 classes");
  if (o.image_size == 0 || o.channels == 0) throw DimensionError("image size and channels must be positive");
  if (o.train_count == 0 || o.eval_count == 0) throw DomainError("empty split");
  if (!(o.signal >= 0.0) || !(o.noise >= 0.0) || !(o.position_jitter >= 0.0) || !(o.texture >= 0.0)) {
    throw DomainError("signal, texture, noise and jitter must be non-negative");
  }
  Dataset d;
  d.num_classes = o.num_classes;
  fill_split(o, o.train_count, "train", derive_seed(o.seed, 101), d.train);
  fill_split(o, o.eval_count, "eval", derive_seed(o.seed, 202), d.eval);
  return d;
}

void save_dataset(const std::string& dir, const Dataset& data) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(fmt::format("cannot create {}: {}", dir, ec.message()));
  std::ofstream csv(fs::path(dir) / "labels.csv");
  if (!csv) throw IoError(fmt::format("cannot write {}/labels.csv", dir));
  csv << "file,label,split\n";
  auto emit = [&](const LabeledImages& split, const char* tag) {
    for (std::size_t i = 0; i < split.size(); ++i) {
      const std::string file = split.names[i] + ".tnsr";
      write_tnsr((fs::path(dir) / file).string(), split.images[i], TnsrDtype::kF32);
      csv << file << ',' << split.labels[i] << ',' << tag << '\n';
    }
  };
  emit(data.train, "train");
  emit(data.eval, "eval");
  if (!csv) throw IoError(fmt::format("write failed on {}/labels.csv", dir));
}

Dataset load_dataset(const std::string& dir, bool images) {
  const fs::path index = fs::path(dir) / "labels.csv";
  std::ifstream csv(index);
  if (!csv) throw IoError(fmt::format("cannot open {}", index.string()));
  std::string line;
  if (!std::getline(csv, line) || line != "file,label,split") {
    throw FormatError("labels.csv", "expected header file,label,split");
  }
  Dataset d;
  int max_label = -1;
  std::size_t lineno = 1;
  while (std::getline(csv, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string file, label, split;
    if (!std::getline(ss, file, ',') || !std::getline(ss, label, ',') || !std::getline(ss, split)) {
      throw FormatError("labels.csv", fmt::format("line {}: expected 3 fields", lineno));
    }
    int lab = 0;
    try {
      std::size_t used = 0;
      lab = std::stoi(label, &used);
      if (used != label.size() || lab < 0) throw std::invalid_argument(label);
    } catch (const std::exception&) {
      throw FormatError("labels.csv", fmt::format("line {}: bad label '{}'", lineno, label));
    }
    LabeledImages* target = nullptr;
    if (split == "train") {
      target = &d.train;
    } else if (split == "eval") {
      target = &d.eval;
    } else {
      throw FormatError("labels.csv", fmt::format("line {}: unknown split '{}'", lineno, split));
    }
    Tensor img = read_tnsr((fs::path(dir) / file).string());
    if (!images) {
      if (img.rank() != 2) throw DimensionError(fmt::format("{}: expected a d x n token matrix", file));
    } else {
      if (img.rank() == 2) img = img.reshaped({1, img.dim(0), img.dim(1)});
      if (img.rank() != 3) throw DimensionError(fmt::format("{}: expected C x H x W image", file));
    }
    target->images.push_back(std::move(img));
    target->labels.push_back(lab);
    target->names.push_back(fs::path(file).stem().string());
    max_label = std::max(max_label, lab);
  }
  if (d.train.size() == 0 || d.eval.size() == 0) {
    throw FormatError("labels.csv", "both train and eval splits must be non-empty");
  }
  d.num_classes = max_label + 1;
  return d;
}

}  // namespace embcodec
