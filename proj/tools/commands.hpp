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

#ifndef EMBCODEC_TOOLS_COMMANDS_HPP_
#define EMBCODEC_TOOLS_COMMANDS_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "embcodec/bench_pipeline.hpp"
#include "embcodec/dataset.hpp"
#include "embcodec/mae.hpp"

namespace embcodec::cli {

// Every command gets the effective settings (flags over config file over
// environment over defaults) so the manifest can replay the run.
struct RunContext {
  std::string command;
  std::vector<std::string> argv;
  nlohmann::json settings = nlohmann::json::object();
};

struct GenDataArgs {
  std::string out;
  SyntheticOptions synth;
};

struct TrainArgs {
  std::string data;
  std::string out;
  std::string init;          // optional checkpoint to start from
  std::string init_density;  // optional density blob to start from
  MaeConfig model;           // image_size and channels come from the data
  std::size_t pretrain_steps = 0;
  double pretrain_lr = 1e-3;
  double pretrain_mask_ratio = 0.75;
  std::size_t density_fit_steps = 500;
  std::size_t steps = 600;
  double lr = 2e-3;
  double density_lr = 1e-2;
  double lambda = 1e5;
  std::size_t batch_size = 16;
  std::string freeze = "adaptation";
  std::uint64_t seed = 0;
};

struct CompressArgs {
  std::string model;
  std::string density;
  std::string input;
  std::string out;
  std::string mode = "nec";
  std::optional<int> bits;
  bool embed_tables = false;
  int precision = 16;
};

struct DecompressArgs {
  std::string input;
  std::string out;
  std::string density;
  int precision = 16;
};

struct ProbeArgs {
  std::string data;
  std::string model;
  std::string density;
  std::string mode = "float";  // float, nec or uqe
  std::optional<int> bits;
  bool prefix = false;
  std::string pooling = "mean";
  std::size_t epochs = 300;
  double lr = 0.05;
  std::size_t batch_size = 0;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;
  std::string out;  // optional result manifest
};

struct SweepArgs {
  std::string data;  // empty: default synthetic set
  std::uint64_t data_seed = 0;
  std::string out;
  BenchOptions bench;
  std::string pooling = "mean";
  bool no_prefix = false;
};

int run_gen_data(const GenDataArgs& args, const RunContext& ctx);
int run_train(const TrainArgs& args, const RunContext& ctx);
int run_compress(const CompressArgs& args, const RunContext& ctx);
int run_decompress(const DecompressArgs& args, const RunContext& ctx);
int run_probe(const ProbeArgs& args, const RunContext& ctx);
/// Returns 3 when some rows failed; the tables are still written.
int run_sweep(const SweepArgs& args, const RunContext& ctx);

}  // namespace embcodec::cli

#endif  // EMBCODEC_TOOLS_COMMANDS_HPP_
