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

// embcodec command-line front end. Settings come from flags, then an
// optional --config file of key = value lines, then EMBCODEC_SEED for seeds,
// then built-in defaults.

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "commands.hpp"
#include "embcodec/error.hpp"

#ifndef EMBCODEC_VERSION
#define EMBCODEC_VERSION "unknown"
#endif

namespace {

using embcodec::UsageError;
namespace cli = embcodec::cli;

struct Sub {
  CLI::App* app = nullptr;
  std::string config;
  std::map<std::string, bool*> flags;  // CLI11 leaves flag variables alone unless the flag is given

  void flag(const std::string& name, bool& var, const std::string& help) {
    app->add_flag("--" + name, var, help);
    flags[name] = &var;
  }
};

void model_flags(CLI::App* app, embcodec::MaeConfig& m) {
  app->add_option("--embed-dim", m.embed_dim, "embedding channels e");
  app->add_option("--patch-size", m.patch_size);
  app->add_option("--encoder-depth", m.encoder_depth);
  app->add_option("--encoder-heads", m.encoder_heads);
  app->add_option("--mlp-ratio", m.mlp_ratio);
  app->add_option("--decoder-dim", m.decoder_dim);
  app->add_option("--decoder-depth", m.decoder_depth);
  app->add_option("--decoder-heads", m.decoder_heads);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw UsageError(fmt::format("config key '{}': expected true or false, got '{}'", key, v));
}

// Config values become option defaults, so anything on the command line still
// wins. A config seed also beats the environment.
void apply_config(Sub& sub, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw embcodec::IoError(path + ": cannot open config file");
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI().from_config(in);
  } catch (const CLI::ParseError& e) {
    throw UsageError(fmt::format("{}: {}", path, e.what()));
  }
  for (const auto& item : items) {
    if (!item.parents.empty()) {
      throw UsageError(fmt::format("{}: sections are not supported (key '{}')", path, item.fullname()));
    }
    CLI::Option* opt = sub.app->get_option_no_throw("--" + item.name);
    if (opt == nullptr || item.name == "config") {
      throw UsageError(fmt::format("{}: unknown key '{}' for {}", path, item.name, sub.app->get_name()));
    }
    std::string value;
    for (std::size_t i = 0; i < item.inputs.size(); ++i) value += (i ? "," : "") + item.inputs[i];
    if (auto f = sub.flags.find(item.name); f != sub.flags.end()) {
      *f->second = parse_bool(item.name, value);
      opt->default_str(*f->second ? "true" : "false");
    } else {
      try {
        opt->default_val(value);
      } catch (const CLI::Error& e) {
        throw UsageError(fmt::format("{}: bad value '{}' for '{}': {}", path, value, item.name, e.what()));
      }
    }
    if (!opt->get_envname().empty()) opt->envname("");
  }
}

// --config may appear anywhere after the subcommand name.
std::string find_config(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) return argv[i + 1];
    if (a.rfind("--config=", 0) == 0) return a.substr(9);
  }
  return {};
}

nlohmann::json settings_of(const CLI::App* app) {
  nlohmann::json j = nlohmann::json::object();
  std::istringstream lines(app->config_to_str(true, false));
  std::string line;
  while (std::getline(lines, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key == "config") continue;
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    j[key] = value;
  }
  return j;
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(fmt::format("{} is required", flag));
}

int fail(const std::string& kind, const std::string& message) {
  fmt::print(stderr, "embcodec: error [{}]: {}\n", kind, message);
  return kind == "usage" ? 2 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_color_mt("embcodec");
  logger->set_pattern("[%H:%M:%S.%e] %^%l%$ %v");
  spdlog::set_default_logger(logger);

  CLI::App app{"embcodec: learned embedding compression"};
  app.set_version_flag("--version", EMBCODEC_VERSION);
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  std::map<std::string, Sub> subs;
  auto add = [&](const std::string& name, const std::string& help) -> Sub& {
    Sub& s = subs[name];
    s.app = app.add_subcommand(name, help);
    s.app->add_option("--config", s.config, "key = value settings file");
    return s;
  };

  cli::GenDataArgs gen;
  {
    Sub& s = add("gen-data", "write the synthetic blob-position dataset");
    auto* a = s.app;
    a->add_option("--out", gen.out, "output directory");
    a->add_option("--seed", gen.synth.seed)->envname("EMBCODEC_SEED");
    a->add_option("--image-size", gen.synth.image_size);
    a->add_option("--channels", gen.synth.channels);
    a->add_option("--classes", gen.synth.num_classes);
    a->add_option("--train-count", gen.synth.train_count);
    a->add_option("--eval-count", gen.synth.eval_count);
    a->add_option("--signal", gen.synth.signal, "blob amplitude");
    a->add_option("--jitter", gen.synth.position_jitter, "blob position jitter in pixels at size 16");
    a->add_option("--texture", gen.synth.texture, "nuisance grating amplitude");
    a->add_option("--noise", gen.synth.noise, "pixel noise sigma");
  }

  cli::TrainArgs train;
  train.model.mask_ratio = 0.0;
  {
    Sub& s = add("train", "pretrain and/or rate-distortion train a model and its density");
    auto* a = s.app;
    a->add_option("--data", train.data, "dataset directory");
    a->add_option("--out", train.out, "output directory");
    a->add_option("--init", train.init, "checkpoint to start from");
    a->add_option("--init-density", train.init_density, "density blob to start from");
    a->add_option("--lambda", train.lambda, "weight on distortion");
    a->add_option("--steps", train.steps, "rate-distortion steps");
    a->add_option("--lr", train.lr);
    a->add_option("--density-lr", train.density_lr);
    a->add_option("--batch-size", train.batch_size);
    a->add_option("--mask-ratio", train.model.mask_ratio, "mask ratio of the rate-distortion stage");
    a->add_option("--pretrain-steps", train.pretrain_steps, "plain masked-autoencoder steps first");
    a->add_option("--pretrain-lr", train.pretrain_lr);
    a->add_option("--pretrain-mask-ratio", train.pretrain_mask_ratio);
    a->add_option("--density-fit-steps", train.density_fit_steps, "density fit before the rate-distortion stage");
    a->add_option("--freeze", train.freeze, "adaptation, none or all")->check(CLI::IsMember({"adaptation", "none", "all"}));
    a->add_option("--seed", train.seed)->envname("EMBCODEC_SEED");
    model_flags(a, train.model);
  }

  cli::CompressArgs comp;
  {
    Sub& s = add("compress", "compress one image or embedding into an archive");
    auto* a = s.app;
    a->add_option("--input", comp.input, "TNSR image (C x H x W) or embedding (e x n)");
    a->add_option("--out", comp.out, "archive path");
    a->add_option("--mode", comp.mode, "nec, uqe or rdc")->check(CLI::IsMember({"nec", "uqe", "rdc"}));
    a->add_option("--model", comp.model, "checkpoint; the input is then an image to embed");
    a->add_option("--density", comp.density, "density blob (nec)");
    a->add_option("--bits", comp.bits, "uqe: 2-8, 16 or 32; rdc: 8 or 16");
    s.flag("embed-tables", comp.embed_tables, "store the frequency tables in the archive (nec)");
    a->add_option("--precision", comp.precision, "frequency table precision in bits");
  }

  cli::DecompressArgs dec;
  {
    Sub& s = add("decompress", "decode an archive to a TNSR tensor");
    auto* a = s.app;
    a->add_option("--input", dec.input, "archive path");
    a->add_option("--out", dec.out, "TNSR output path");
    a->add_option("--density", dec.density, "density blob for nec archives without tables");
    a->add_option("--precision", dec.precision);
  }

  cli::ProbeArgs probe;
  {
    Sub& s = add("probe", "train a linear probe and report eval accuracy");
    auto* a = s.app;
    a->add_option("--data", probe.data, "dataset directory (images with --model, else d x n tokens)");
    a->add_option("--model", probe.model, "checkpoint used to embed images");
    a->add_option("--density", probe.density, "density blob (nec)");
    a->add_option("--mode", probe.mode, "float, nec or uqe")->check(CLI::IsMember({"float", "nec", "uqe"}));
    a->add_option("--bits", probe.bits, "uqe bit width");
    s.flag("prefix", probe.prefix, "probe after the decoder prefix");
    a->add_option("--pooling", probe.pooling, "mean or attention")
        ->check(CLI::IsMember({"mean", "attention", "attention-pool"}));
    a->add_option("--epochs", probe.epochs);
    a->add_option("--lr", probe.lr);
    a->add_option("--batch-size", probe.batch_size, "0 means full batch");
    a->add_option("--weight-decay", probe.weight_decay);
    a->add_option("--seed", probe.seed)->envname("EMBCODEC_SEED");
    a->add_option("--out", probe.out, "optional JSON manifest path");
  }

  cli::SweepArgs sw;
  {
    Sub& s = add("sweep", "rate vs. probe accuracy for every method");
    auto* a = s.app;
    auto& b = sw.bench;
    a->add_option("--data", sw.data, "dataset directory; default: synthetic set");
    a->add_option("--data-seed", sw.data_seed, "seed of the synthetic set");
    a->add_option("--out", sw.out, "output directory");
    a->add_option("--seeds", b.seeds)->delimiter(',')->envname("EMBCODEC_SEED");
    a->add_option("--lambdas", b.lambdas, "explicit lambdas; overrides the multipliers")->delimiter(',');
    a->add_option("--lambda-multipliers", b.lambda_multipliers, "multiples of R0/D0")->delimiter(',');
    a->add_option("--uqe-bits", b.uqe_bits)->delimiter(',');
    a->add_option("--rdc-depths", b.rdc_depths)->delimiter(',');
    a->add_option("--pretrain-steps", b.pretrain_steps);
    a->add_option("--pretrain-lr", b.pretrain_lr);
    a->add_option("--adapt-steps", b.adapt_steps);
    a->add_option("--adapt-lr", b.adapt_lr);
    a->add_option("--density-lr", b.density_lr);
    a->add_option("--adapt-mask-ratio", b.adapt_mask_ratio);
    a->add_option("--density-fit-steps", b.density_fit_steps);
    a->add_option("--calibration-images", b.calibration_images);
    a->add_option("--batch-size", b.batch_size);
    a->add_option("--precision", b.precision_bits);
    a->add_option("--finetune-epochs", b.finetune_epochs);
    a->add_option("--finetune-lr", b.finetune_lr);
    a->add_option("--head-lr", b.head_lr);
    a->add_option("--probe-epochs", b.probe.epochs);
    a->add_option("--probe-lr", b.probe.lr);
    a->add_option("--pooling", sw.pooling)->check(CLI::IsMember({"mean", "attention", "attention-pool"}));
    s.flag("no-prefix", sw.no_prefix, "skip the NEC+prefix rows");
    s.flag("fully-loaded", b.fully_loaded, "count whole archives, tables included");
    a->add_option("--mask-ratio", b.model.mask_ratio, "pretraining mask ratio");
    model_flags(a, b.model);
  }

  std::string command;
  try {
    for (int i = 1; i < argc; ++i) {
      if (subs.count(argv[i])) {
        command = argv[i];
        break;
      }
    }
    if (const std::string path = find_config(argc, argv); !path.empty() && !command.empty()) {
      apply_config(subs[command], path);
    }
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what());
  } catch (const embcodec::Error& e) {
    return fail(e.kind(), e.what());
  }
  spdlog::set_level(spdlog::level::from_str(log_level));

  cli::RunContext ctx;
  ctx.command = command;
  ctx.argv.assign(argv, argv + argc);
  ctx.settings = settings_of(subs[command].app);
  try {
    if (command == "gen-data") {
      require(gen.out, "--out");
      return cli::run_gen_data(gen, ctx);
    }
    if (command == "train") {
      require(train.data, "--data");
      require(train.out, "--out");
      return cli::run_train(train, ctx);
    }
    if (command == "compress") {
      require(comp.input, "--input");
      require(comp.out, "--out");
      return cli::run_compress(comp, ctx);
    }
    if (command == "decompress") {
      require(dec.input, "--input");
      require(dec.out, "--out");
      return cli::run_decompress(dec, ctx);
    }
    if (command == "probe") {
      require(probe.data, "--data");
      return cli::run_probe(probe, ctx);
    }
    if (command == "sweep") {
      require(sw.out, "--out");
      return cli::run_sweep(sw, ctx);
    }
    return fail("usage", "unknown command");
  } catch (const embcodec::Error& e) {
    return fail(e.kind(), e.what());
  } catch (const std::exception& e) {
    return fail("internal", e.what());
  }
}
