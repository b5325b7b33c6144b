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

#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "embcodec/archive.hpp"
#include "embcodec/binio.hpp"
#include "embcodec/entropy_model.hpp"
#include "embcodec/error.hpp"
#include "embcodec/pipeline.hpp"
#include "embcodec/plot.hpp"
#include "embcodec/probe.hpp"
#include "embcodec/quantizer.hpp"
#include "embcodec/random.hpp"

#ifndef EMBCODEC_VERSION
#define EMBCODEC_VERSION "unknown"
#endif

namespace embcodec::cli {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Stream tags, shared with the bench so a CLI run and a sweep seed agree.
constexpr std::uint64_t kModelInit = 1;
constexpr std::uint64_t kPretrain = 2;
constexpr std::uint64_t kCalibrate = 3;
constexpr std::uint64_t kDensityInit = 4;
constexpr std::uint64_t kAdapt = 5;

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string hex64(std::uint64_t v) { return fmt::format("{:016x}", v); }

json file_entry(const std::string& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  return {{"path", path}, {"bytes", bytes.size()}, {"fnv1a64", hex64(fnv1a64(bytes))}};
}

// Content hash of a dataset directory: every regular file, in name order.
json dir_entry(const std::string& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& f : files) {
    const std::string name = f.filename().string();
    const std::vector<std::uint8_t> bytes = read_file(f.string());
    h = derive_seed(h, fnv1a64({reinterpret_cast<const std::uint8_t*>(name.data()), name.size()}));
    h = derive_seed(h, fnv1a64(bytes));
  }
  return {{"path", dir}, {"files", files.size()}, {"hash", hex64(h)}};
}

void write_manifest(const std::string& path, const RunContext& ctx, const json& inputs, const json& outputs,
                    const json& results, double wall) {
  json j;
  j["tool"] = "embcodec";
  j["version"] = EMBCODEC_VERSION;
  j["command"] = ctx.command;
  j["argv"] = ctx.argv;
  j["settings"] = ctx.settings;
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  j["results"] = results;
  j["wall_time_seconds"] = wall;
  std::ofstream out(path);
  if (!out) throw IoError(path + ": cannot write manifest");
  out << j.dump(2) << '\n';
  if (!out) throw IoError(path + ": write failed");
}

void write_text(const std::string& path, const std::string& text) {
  write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(dir + ": " + ec.message());
}

std::string num(double v) { return std::isnan(v) ? "nan" : fmt::format("{}", v); }

MaeModel load_model(const std::string& path) { return decode_checkpoint(read_file(path)); }

// Embedding the receiver gets: the unmasked encoder output at f32 precision.
Tensor embed_input(const MaeModel& model, const Tensor& image) {
  return to_f32_precision(embed(model, image, 0, 0.0));
}

void check_bits_for(const std::string& mode, const std::optional<int>& bits) {
  if (!bits) throw UsageError(fmt::format("--bits is required for --mode {}", mode));
}

}  // namespace

int run_gen_data(const GenDataArgs& args, const RunContext& ctx) {
  Stopwatch clock;
  const Dataset d = generate_synthetic(args.synth);
  ensure_dir(args.out);
  save_dataset(args.out, d);
  spdlog::info("wrote {} train and {} eval images ({} classes) to {}", d.train.size(), d.eval.size(), d.num_classes,
               args.out);
  write_manifest((fs::path(args.out) / "manifest.json").string(), ctx, json::object(),
                 {{"dataset", dir_entry(args.out)}},
                 {{"train", d.train.size()}, {"eval", d.eval.size()}, {"classes", d.num_classes}}, clock.seconds());
  return 0;
}

int run_train(const TrainArgs& args, const RunContext& ctx) {
  Stopwatch clock;
  const FreezeMask freeze = FreezeMask::parse(args.freeze);
  const Dataset data = load_dataset(args.data);
  const Tensor& first = data.train.images.front();

  MaeModel model = [&] {
    if (!args.init.empty()) {
      spdlog::info("starting from checkpoint {}; architecture flags are ignored", args.init);
      return load_model(args.init);
    }
    MaeConfig cfg = args.model;
    cfg.channels = first.dim(0);
    cfg.image_size = first.dim(1);
    return MaeModel(cfg, derive_seed(args.seed, kModelInit));
  }();
  if (first.dim(0) != model.config().channels || first.dim(1) != model.config().image_size ||
      first.dim(2) != model.config().image_size) {
    throw DimensionError(fmt::format("images are {} but the model expects {}x{}x{}", shape_string(first.shape()),
                                     model.config().channels, model.config().image_size,
                                     model.config().image_size));
  }
  const auto e = static_cast<int>(model.config().embed_dim);
  FactorizedDensity density = args.init_density.empty()
                                  ? FactorizedDensity(e, {3, 3, 3}, 10.0, derive_seed(args.seed, kDensityInit))
                                  : decode_density(read_file(args.init_density)).model;
  if (density.channels() != e) {
    throw DimensionError(fmt::format("density has {} channels, embedding has {}", density.channels(), e));
  }

  const double trainable = model.trainable_fraction(freeze);
  spdlog::info("{} parameters, freeze={} leaves {} trainable ({:.1f}%)", model.num_params(), args.freeze,
               model.trainable_count(freeze), 100.0 * trainable);

  std::string trace = "stage,step,loss,distortion,rate_bits\n";
  auto append = [&](const char* stage, const TrainResult& r) {
    for (std::size_t i = 0; i < r.trace.size(); ++i) {
      trace += fmt::format("{},{},{},{},{}\n", stage, i, num(r.trace[i].loss), num(r.trace[i].distortion),
                           num(r.trace[i].rate));
    }
  };

  if (args.pretrain_steps > 0) {
    const double keep = model.config().mask_ratio;
    model.set_mask_ratio(args.pretrain_mask_ratio);
    TrainOptions t;
    t.steps = args.pretrain_steps;
    t.batch_size = args.batch_size;
    t.lr = args.pretrain_lr;
    t.freeze = FreezeMask::none();
    t.seed = derive_seed(args.seed, kPretrain);
    spdlog::info("pretraining for {} steps at mask ratio {}", t.steps, args.pretrain_mask_ratio);
    const TrainResult r = train(model, nullptr, data.train.images, t);
    append("pretrain", r);
    model.set_mask_ratio(keep);
    if (!r.trace.empty()) spdlog::info("pretrain final distortion {:.5f}", r.trace.back().distortion);
  }
  // Fresh models already carry the requested ratio.
  if (args.steps > 0 && !args.init.empty()) model.set_mask_ratio(args.model.mask_ratio);

  if (args.density_fit_steps > 0) {
    const std::size_t n = std::min<std::size_t>(64, data.train.size());
    const std::uint64_t cs = derive_seed(args.seed, kCalibrate);
    std::vector<Tensor> noisy(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint64_t s = derive_seed(cs, i);
      noisy[i] = add_uniform_noise(embed(model, data.train.images[i], s), derive_seed(s, 1));
    }
    FitOptions f;
    f.steps = args.density_fit_steps;
    fit(density, noisy, f);
    spdlog::info("density fitted to {} embeddings for {} steps", n, f.steps);
  }

  if (args.steps > 0) {
    TrainOptions t;
    t.steps = args.steps;
    t.batch_size = args.batch_size;
    t.lr = args.lr;
    t.density_lr = args.density_lr;
    t.lambda = args.lambda;
    t.freeze = freeze;
    t.seed = derive_seed(args.seed, kAdapt);
    spdlog::info("rate-distortion training for {} steps, lambda {}", t.steps, t.lambda);
    const TrainResult r = train(model, &density, data.train.images, t);
    append("rd", r);
    if (!r.trace.empty()) {
      spdlog::info("final loss {:.4f} (distortion {:.5f}, rate {:.1f} bits)", r.trace.back().loss,
                   r.trace.back().distortion, r.trace.back().rate);
    }
  }

  ensure_dir(args.out);
  const fs::path out(args.out);
  const std::string ckpt = (out / "model.ckpt").string();
  const std::string dens = (out / "density.fden").string();
  const std::string loss = (out / "loss.csv").string();
  write_file(ckpt, encode_checkpoint(model));
  write_file(dens, encode_density(density, symbol_ranges_from_density(density)));
  write_text(loss, trace);

  json inputs = {{"data", dir_entry(args.data)}};
  if (!args.init.empty()) inputs["init"] = file_entry(args.init);
  if (!args.init_density.empty()) inputs["init_density"] = file_entry(args.init_density);
  json results = {{"parameters", model.num_params()},
                  {"trainable_parameters", model.trainable_count(freeze)},
                  {"trainable_fraction", trainable}};
  write_manifest((out / "manifest.json").string(), ctx, inputs,
                 {{"checkpoint", file_entry(ckpt)}, {"density", file_entry(dens)}, {"loss_trace", file_entry(loss)}},
                 results, clock.seconds());
  fmt::print("trainable_fraction={} checkpoint={}\n", trainable, ckpt);
  return 0;
}

int run_compress(const CompressArgs& args, const RunContext& ctx) {
  Stopwatch clock;
  const Tensor input = read_tnsr(args.input);
  CompressedArchive archive;
  double analytic = RDPoint::kNaN;
  json inputs = {{"input", file_entry(args.input)}};

  auto embedding = [&]() -> Tensor {
    if (args.model.empty()) {
      if (input.rank() != 2) throw DimensionError("without --model the input must be an e x n embedding");
      return input;
    }
    inputs["model"] = file_entry(args.model);
    return embed_input(load_model(args.model), input);
  };

  if (args.mode == "nec") {
    if (args.bits) throw UsageError("--bits does not apply to --mode nec");
    if (args.density.empty()) throw UsageError("--density is required for --mode nec");
    const NecCodec codec = NecCodec::from_blob(read_file(args.density), args.precision);
    inputs["density"] = file_entry(args.density);
    const Tensor y = embedding();
    archive = nec_compress(y, codec, args.embed_tables);
    analytic = rate_bits(codec.density, round_quantize(y).to_tensor());
  } else if (args.mode == "uqe") {
    check_bits_for("uqe", args.bits);
    if (args.embed_tables) throw UsageError("--embed-tables only applies to --mode nec");
    archive = uqe_compress(embedding(), *args.bits);
  } else if (args.mode == "rdc") {
    check_bits_for("rdc", args.bits);
    if (args.embed_tables) throw UsageError("--embed-tables only applies to --mode nec");
    if (!args.model.empty()) throw UsageError("--model does not apply to --mode rdc");
    archive = rdc_compress(input, *args.bits);
  } else {
    throw UsageError(fmt::format("unknown --mode '{}' (expected nec, uqe or rdc)", args.mode));
  }

  const std::vector<std::uint8_t> packed = pack_archive(archive);
  write_file(args.out, packed);
  fmt::print("mode={} payload_bytes={} archive_bytes={} analytic_rate_bits={}\n", args.mode, archive.payload.size(),
             packed.size(), num(analytic));
  write_manifest(args.out + ".json", ctx, inputs, {{"archive", file_entry(args.out)}},
                 {{"mode", args.mode},
                  {"payload_bytes", archive.payload.size()},
                  {"archive_bytes", packed.size()},
                  {"analytic_rate_bits", std::isnan(analytic) ? json(nullptr) : json(analytic)}},
                 clock.seconds());
  return 0;
}

int run_decompress(const DecompressArgs& args, const RunContext& ctx) {
  Stopwatch clock;
  const CompressedArchive archive = unpack_archive(read_file(args.input));
  json inputs = {{"input", file_entry(args.input)}};
  Tensor out;
  switch (archive.mode) {
    case ArchiveMode::kNec: {
      std::optional<NecCodec> codec;
      if (!args.density.empty()) {
        codec = NecCodec::from_blob(read_file(args.density), args.precision);
        inputs["density"] = file_entry(args.density);
      }
      out = nec_decompress(archive, codec ? &*codec : nullptr).to_tensor();
      break;
    }
    case ArchiveMode::kUqe:
      out = uqe_decompress(archive);
      break;
    case ArchiveMode::kRdc:
      out = rdc_decompress(archive);
      break;
  }
  write_tnsr(args.out, out, TnsrDtype::kF64);
  fmt::print("mode={} shape={}\n", mode_name(archive.mode), shape_string(out.shape()));
  write_manifest(args.out + ".json", ctx, inputs, {{"tensor", file_entry(args.out)}},
                 {{"mode", mode_name(archive.mode)}, {"shape", out.shape()}}, clock.seconds());
  return 0;
}

int run_probe(const ProbeArgs& args, const RunContext& ctx) {
  Stopwatch clock;
  const bool have_model = !args.model.empty();
  if (args.prefix && !have_model) throw UsageError("--prefix needs --model");
  if (args.mode != "float" && args.mode != "nec" && args.mode != "uqe") {
    throw UsageError(fmt::format("unknown --mode '{}' (expected float, nec or uqe)", args.mode));
  }
  if (args.mode == "uqe") check_bits_for("uqe", args.bits);
  if (args.mode != "uqe" && args.bits) throw UsageError("--bits only applies to --mode uqe");
  if (args.mode == "nec" && args.density.empty()) throw UsageError("--density is required for --mode nec");

  ProbeConfig pc;
  pc.pooling = parse_pooling(args.pooling);
  pc.epochs = args.epochs;
  pc.lr = args.lr;
  pc.batch_size = args.batch_size;
  pc.weight_decay = args.weight_decay;
  pc.seed = args.seed;

  const Dataset data = load_dataset(args.data, have_model);
  json inputs = {{"data", dir_entry(args.data)}};
  std::optional<MaeModel> model;
  if (have_model) {
    model = load_model(args.model);
    inputs["model"] = file_entry(args.model);
  }
  std::optional<NecCodec> codec;
  if (args.mode == "nec") {
    codec = NecCodec::from_blob(read_file(args.density));
    inputs["density"] = file_entry(args.density);
  }

  std::size_t payload = 0;
  auto features = [&](const LabeledImages& split, bool count) {
    std::vector<Tensor> out(split.size());
    for (std::size_t i = 0; i < split.size(); ++i) {
      Tensor y = model ? embed_input(*model, split.images[i]) : split.images[i];
      if (codec || args.mode == "uqe") {
        const CompressedArchive a = codec ? nec_compress(y, *codec) : uqe_compress(y, *args.bits);
        if (count) payload += a.payload.size();
        const CompressedArchive b = unpack_archive(pack_archive(a));
        y = codec ? nec_decompress(b, &*codec).to_tensor() : uqe_decompress(b);
      }
      out[i] = args.prefix ? prefix_tokens(*model, y) : std::move(y);
    }
    return out;
  };
  const std::vector<Tensor> tr = features(data.train, false);
  const std::vector<Tensor> ev = features(data.eval, true);
  const ProbeResult r = train_probe(tr, data.train.labels, ev, data.eval.labels, data.num_classes, pc);

  const double bits = args.mode == "float" ? RDPoint::kNaN : 8.0 * static_cast<double>(payload) /
                                                                static_cast<double>(data.eval.size());
  fmt::print("accuracy={} correct={} total={} bits_per_sample={}\n", r.accuracy, r.correct, r.total, num(bits));
  if (!args.out.empty()) {
    write_manifest(args.out, ctx, inputs, json::object(),
                   {{"accuracy", r.accuracy},
                    {"correct", r.correct},
                    {"total", r.total},
                    {"bits_per_sample", std::isnan(bits) ? json(nullptr) : json(bits)}},
                   clock.seconds());
  }
  return 0;
}

int run_sweep(const SweepArgs& args, const RunContext& ctx) {
  Stopwatch clock;
  BenchOptions o = args.bench;
  o.probe.pooling = parse_pooling(args.pooling);
  o.prefix = !args.no_prefix;

  json inputs = json::object();
  Dataset data;
  if (args.data.empty()) {
    SyntheticOptions s;
    s.seed = args.data_seed;
    data = generate_synthetic(s);
    spdlog::info("no --data given; using the synthetic set with seed {}", s.seed);
    inputs["synthetic_seed"] = s.seed;
  } else {
    data = load_dataset(args.data);
    inputs["data"] = dir_entry(args.data);
  }
  const Tensor& first = data.train.images.front();
  o.model.channels = first.dim(0);
  o.model.image_size = first.dim(1);
  o.validate();

  const std::vector<RDPoint> points = sweep(data, o, [](const std::string& line) { spdlog::info("{}", line); });

  ensure_dir(args.out);
  const fs::path out(args.out);
  const std::string rd = (out / "rd.csv").string();
  const std::string pareto = (out / "rd_pareto.csv").string();
  const std::string svg = (out / "rd_plot.svg").string();
  write_text(rd, rd_csv(points));
  write_text(pareto, rd_pareto_csv(points));
  write_text(svg, rd_plot_svg(points, "probe accuracy vs. bits per sample"));

  std::size_t failed = 0;
  for (const auto& p : points) {
    if (!p.ok()) {
      ++failed;
      spdlog::error("{} {} seed {} failed: {}", p.method, p.setting, p.seed, p.error);
    }
  }
  write_manifest((out / "manifest.json").string(), ctx, inputs,
                 {{"rd", file_entry(rd)}, {"rd_pareto", file_entry(pareto)}, {"plot", file_entry(svg)}},
                 {{"rows", points.size()}, {"failed_rows", failed}}, clock.seconds());
  spdlog::info("{} rows written to {} in {:.1f} s", points.size(), args.out, clock.seconds());
  if (failed > 0) {
    fmt::print(stderr, "embcodec: error [partial]: {} of {} rows failed; see rd_pareto.csv\n", failed,
               points.size());
    return 3;
  }
  return 0;
}

}  // namespace embcodec::cli
