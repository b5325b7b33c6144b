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

#include "embcodec/bench_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <memory>
#include <numeric>

#include <fmt/format.h>

#include "embcodec/archive.hpp"
#include "embcodec/error.hpp"
#include "embcodec/pipeline.hpp"
#include "embcodec/quantizer.hpp"
#include "embcodec/random.hpp"

namespace embcodec {
namespace {

// Stream tags under the per-seed root.
constexpr std::uint64_t kModelInit = 1;
constexpr std::uint64_t kPretrain = 2;
constexpr std::uint64_t kCalibrate = 3;
constexpr std::uint64_t kDensityInit = 4;
constexpr std::uint64_t kAdapt = 5;
constexpr std::uint64_t kProbe = 6;
constexpr std::uint64_t kFinetune = 7;
constexpr std::uint64_t kEval = 8;

std::string uqe_method(int bits) {
  if (bits == 16 || bits == 32) return fmt::format("UQE-f{}", bits);
  return fmt::format("UQE-{}", bits);
}

ProbeConfig probe_config(const BenchOptions& o, std::uint64_t seed) {
  ProbeConfig p = o.probe;
  p.seed = derive_seed(seed, kProbe);
  return p;
}

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double mse(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

// Runs f(i) for i in [0, n) in parallel and rethrows the first failure by index.
template <class F>
void parallel_for(std::size_t n, F&& f) {
  std::vector<std::exception_ptr> errors(n);
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      f(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::size_t archive_bytes(const CompressedArchive& a, const std::vector<std::uint8_t>& packed, bool fully_loaded) {
  return fully_loaded ? packed.size() : a.payload.size();
}

std::vector<double> mean_pool(const Tensor& y) {
  std::vector<double> f(y.rows(), 0.0);
  for (std::size_t k = 0; k < y.rows(); ++k) {
    for (std::size_t j = 1; j < y.cols(); ++j) f[k] += y(k, j);
    f[k] /= static_cast<double>(y.cols() - 1);
  }
  return f;
}

struct Adam {
  std::vector<double> m, v;
  std::size_t t = 0;
  explicit Adam(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
  void step(std::span<double> p, std::span<const double> g, double lr) {
    ++t;
    const double c1 = 1.0 - std::pow(0.9, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(0.999, static_cast<double>(t));
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = 0.9 * m[i] + 0.1 * g[i];
      v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
      p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + 1e-8);
    }
  }
};

// Full fine-tuning of backbone and linear head on (decoded) raw images;
// returns eval accuracy.
double finetune_accuracy(const MaeModel& backbone, std::span<const Tensor> train, std::span<const int> train_labels,
                         std::span<const Tensor> eval, std::span<const int> eval_labels, int classes,
                         const BenchOptions& o, std::uint64_t seed) {
  MaeModel model = backbone;
  const std::size_t e = model.config().embed_dim;
  const auto k = static_cast<std::size_t>(classes);
  std::vector<double> head(k * e + k, 0.0);
  Adam model_opt(model.num_params()), head_opt(head.size());
  Rng rng(derive_seed(seed, kFinetune));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch = std::max<std::size_t>(1, std::min(o.finetune_batch, train.size()));

  auto logits = [&](const std::vector<double>& f) {
    std::vector<double> out(k);
    for (std::size_t c = 0; c < k; ++c) {
      double s = head[k * e + c];
      for (std::size_t i = 0; i < e; ++i) s += head[c * e + i] * f[i];
      out[c] = s;
    }
    return out;
  };

  struct SampleGrad {
    std::vector<double> model, head;
  };
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < o.finetune_epochs; ++epoch) {
    for (std::size_t i = train.size() - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
    for (std::size_t start = 0; start < train.size(); start += batch) {
      const std::size_t stop = std::min(train.size(), start + batch);
      std::vector<SampleGrad> per(stop - start);
      parallel_for(stop - start, [&](std::size_t j) {
        const std::size_t idx = order[start + j];
        const Tensor y = embed(model, train[idx], 0, 0.0);
        const std::vector<double> f = mean_pool(y);
        std::vector<double> p = logits(f);
        const double mx = *std::max_element(p.begin(), p.end());
        double z = 0.0;
        for (auto& v : p) z += (v = std::exp(v - mx));
        for (auto& v : p) v /= z;
        p[static_cast<std::size_t>(train_labels[idx])] -= 1.0;
        SampleGrad g;
        g.head.assign(head.size(), 0.0);
        std::vector<double> df(e, 0.0);
        for (std::size_t c = 0; c < k; ++c) {
          for (std::size_t i = 0; i < e; ++i) {
            g.head[c * e + i] = p[c] * f[i];
            df[i] += head[c * e + i] * p[c];
          }
          g.head[k * e + c] = p[c];
        }
        Tensor dy = Tensor::matrix(y.rows(), y.cols());
        const double w = 1.0 / static_cast<double>(y.cols() - 1);
        for (std::size_t i = 0; i < e; ++i)
          for (std::size_t t = 1; t < y.cols(); ++t) dy(i, t) = df[i] * w;
        g.model = embed_backward(model, train[idx], dy);
        per[j] = std::move(g);
      });
      std::vector<double> gm(model.num_params(), 0.0), gh(head.size(), 0.0);
      const double scale = 1.0 / static_cast<double>(stop - start);
      for (const auto& g : per) {
        for (std::size_t i = 0; i < gm.size(); ++i) gm[i] += g.model[i] * scale;
        for (std::size_t i = 0; i < gh.size(); ++i) gh[i] += g.head[i] * scale;
      }
      ++step;
      model_opt.step(model.params(), gm, o.finetune_lr);
      head_opt.step(head, gh, o.head_lr);
      for (double v : head)
        if (!std::isfinite(v)) throw TrainingError(step, "fine-tuning diverged");
    }
  }
  std::vector<int> pred(eval.size());
  parallel_for(eval.size(), [&](std::size_t i) {
    const std::vector<double> lg = logits(mean_pool(embed(model, eval[i], 0, 0.0)));
    pred[i] = static_cast<int>(std::max_element(lg.begin(), lg.end()) - lg.begin());
  });
  std::size_t correct = 0;
  for (std::size_t i = 0; i < eval.size(); ++i) correct += pred[i] == eval_labels[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(eval.size());
}

}  // namespace

void BenchOptions::validate() const {
  model.validate();
  if (batch_size == 0) throw DomainError("batch size must be positive");
  if (!(pretrain_lr > 0.0) || !(adapt_lr > 0.0) || !(density_lr > 0.0)) throw DomainError("learning rates must be > 0");
  if (lambdas.empty() && lambda_multipliers.empty()) throw UsageError("empty lambda sweep");
  for (double l : lambdas)
    if (!(l >= 0.0) || !std::isfinite(l)) throw DomainError("lambda must be finite and non-negative");
  for (double m : lambda_multipliers)
    if (!(m > 0.0) || !std::isfinite(m)) throw DomainError("lambda multipliers must be positive");
  for (int b : uqe_bits)
    if (!((b >= 2 && b <= 8) || b == 16 || b == 32)) throw DomainError(fmt::format("UQE bit width {} unsupported", b));
  for (int d : rdc_depths)
    if (d != 8 && d != 16) throw DomainError(fmt::format("RDC depth {} unsupported", d));
  if (seeds.empty()) throw UsageError("no seeds");
  if (precision_bits < 8 || precision_bits > 16) throw DomainError("precision_bits must be in [8, 16]");
  if (calibration_images == 0) throw DomainError("calibration needs at least one image");
  if (finetune_batch == 0) throw DomainError("fine-tune batch must be positive");
  MaeConfig c = model;
  c.mask_ratio = adapt_mask_ratio;
  c.validate();
}

std::vector<Tensor> embed_split(const MaeModel& model, std::span<const Tensor> images) {
  std::vector<Tensor> out(images.size());
  parallel_for(images.size(), [&](std::size_t i) { out[i] = to_f32_precision(embed(model, images[i], 0, 0.0)); });
  return out;
}

Tensor prefix_tokens(const MaeModel& model, const Tensor& y) { return decoder_prefix(model, y).transposed(); }

Backbone pretrain_backbone(const Dataset& data, const BenchOptions& o, std::uint64_t seed) {
  o.validate();
  Backbone b{MaeModel(o.model, derive_seed(seed, kModelInit)),
             FactorizedDensity(static_cast<int>(o.model.embed_dim), {3, 3, 3}, 10.0, derive_seed(seed, kDensityInit))};
  if (o.pretrain_steps > 0) {
    TrainOptions t;
    t.steps = o.pretrain_steps;
    t.batch_size = o.batch_size;
    t.lr = o.pretrain_lr;
    t.lambda = 1.0;
    t.freeze = FreezeMask::none();
    t.seed = derive_seed(seed, kPretrain);
    train(b.model, nullptr, data.train.images, t);
  }
  const std::size_t n = std::min(o.calibration_images, data.train.size());
  const std::span<const Tensor> calib(data.train.images.data(), n);
  const std::uint64_t cs = derive_seed(seed, kCalibrate);

  std::vector<double> d0(n);
  parallel_for(n, [&](std::size_t i) {
    d0[i] = compression_loss(b.model, calib[i], nullptr, 1.0, derive_seed(cs, i)).distortion;
  });
  MaeModel adapted_view = b.model;
  adapted_view.set_mask_ratio(o.adapt_mask_ratio);
  std::vector<Tensor> noisy(n);
  parallel_for(n, [&](std::size_t i) {
    const std::uint64_t s = derive_seed(cs, i);
    noisy[i] = add_uniform_noise(embed(adapted_view, calib[i], s), derive_seed(s, 1));
  });
  if (o.density_fit_steps > 0) {
    FitOptions f;
    f.steps = o.density_fit_steps;
    fit(b.density, noisy, f);
  }
  std::vector<double> r0(n);
  parallel_for(n, [&](std::size_t i) { r0[i] = rate_bits(b.density, noisy[i]); });
  b.rate0 = mean(r0);
  b.distortion0 = mean(d0);
  if (!(b.distortion0 > 0.0)) throw DegenerateInputError("backbone distortion is zero; cannot balance lambda");
  b.lambda_scale = b.rate0 / b.distortion0;
  return b;
}

std::vector<double> lambda_grid(const Backbone& b, const BenchOptions& o) {
  if (!o.lambdas.empty()) return o.lambdas;
  std::vector<double> out;
  for (double m : o.lambda_multipliers) out.push_back(b.lambda_scale * m);
  return out;
}

AdaptedModel adapt(const Backbone& b, const Dataset& data, double lambda, const BenchOptions& o, std::uint64_t seed) {
  AdaptedModel a{b.model, b.density, {}};
  a.model.set_mask_ratio(o.adapt_mask_ratio);
  TrainOptions t;
  t.steps = o.adapt_steps;
  t.batch_size = o.batch_size;
  t.lr = o.adapt_lr;
  t.density_lr = o.density_lr;
  t.lambda = lambda;
  t.freeze = FreezeMask::adaptation();
  // Same stream for every lambda so the points of one seed are paired.
  t.seed = derive_seed(seed, kAdapt);
  if (t.steps > 0) a.result = train(a.model, &a.density, data.train.images, t);
  return a;
}

RdEstimate evaluate_rd(const MaeModel& model, const FactorizedDensity& density, std::span<const Tensor> images,
                       std::uint64_t seed) {
  if (images.empty()) throw DimensionError("no images to evaluate");
  std::vector<LossTerms> terms(images.size());
  const std::uint64_t es = derive_seed(seed, kEval);
  parallel_for(images.size(),
               [&](std::size_t i) { terms[i] = quantized_loss(model, images[i], density, 1.0, derive_seed(es, i)); });
  RdEstimate r;
  for (const auto& t : terms) {
    r.rate_bits += t.rate;
    r.distortion += t.distortion;
  }
  r.rate_bits /= static_cast<double>(images.size());
  r.distortion /= static_cast<double>(images.size());
  return r;
}

std::vector<RDPoint> run_nec(const MaeModel& model, const FactorizedDensity& density, const Dataset& data,
                             double lambda, const BenchOptions& o, std::uint64_t seed) {
  const NecCodec codec = NecCodec::build(density, o.precision_bits);
  const std::vector<Tensor> ytr = embed_split(model, data.train.images);
  const std::vector<Tensor> yev = embed_split(model, data.eval.images);

  // Sender -> bytes -> receiver for both splits; the probe only ever sees
  // what came out of the decoder.
  auto transport = [&](const std::vector<Tensor>& ys, std::vector<double>* bytes, std::vector<double>* analytic) {
    std::vector<Tensor> decoded(ys.size());
    parallel_for(ys.size(), [&](std::size_t i) {
      const CompressedArchive a = nec_compress(ys[i], codec, o.fully_loaded);
      const std::vector<std::uint8_t> packed = pack_archive(a);
      const QuantizedEmbedding q = nec_decompress(unpack_archive(packed), &codec);
      if (!(q == round_quantize(ys[i]))) throw CorruptionError(fmt::format("sample {}: decoded symbols differ", i));
      decoded[i] = q.to_tensor();
      if (bytes) (*bytes)[i] = static_cast<double>(archive_bytes(a, packed, o.fully_loaded));
      if (analytic) (*analytic)[i] = rate_bits(density, decoded[i]);
    });
    return decoded;
  };
  std::vector<double> bytes(yev.size()), analytic(yev.size());
  const std::vector<Tensor> dtr = transport(ytr, nullptr, nullptr);
  const std::vector<Tensor> dev = transport(yev, &bytes, &analytic);

  RDPoint p;
  p.method = "NEC";
  p.setting = fmt::format("{:.6g}", lambda);
  p.seed = seed;
  p.lambda = lambda;
  p.bytes_per_sample = mean(bytes);
  p.bits_per_sample = 8.0 * p.bytes_per_sample;
  p.analytic_rate_bits = mean(analytic);
  p.one_time_cost_bytes = static_cast<double>(codec.blob.size());
  p.symbols = yev.size() * yev.front().size();
  p.distortion_mse = evaluate_rd(model, density, data.eval.images, seed).distortion;
  p.probe_accuracy =
      train_probe(dtr, data.train.labels, dev, data.eval.labels, data.num_classes, probe_config(o, seed)).accuracy;
  std::vector<RDPoint> out{p};
  if (o.prefix) {
    std::vector<Tensor> ptr(dtr.size()), pev(dev.size());
    parallel_for(dtr.size(), [&](std::size_t i) { ptr[i] = prefix_tokens(model, dtr[i]); });
    parallel_for(dev.size(), [&](std::size_t i) { pev[i] = prefix_tokens(model, dev[i]); });
    RDPoint q = p;
    q.method = "NEC+prefix";
    q.probe_accuracy =
        train_probe(ptr, data.train.labels, pev, data.eval.labels, data.num_classes, probe_config(o, seed)).accuracy;
    out.push_back(q);
  }
  return out;
}

RDPoint run_uqe(const MaeModel& model, const Dataset& data, int bits, const BenchOptions& o, std::uint64_t seed) {
  const std::vector<Tensor> ytr = embed_split(model, data.train.images);
  const std::vector<Tensor> yev = embed_split(model, data.eval.images);
  auto transport = [&](const std::vector<Tensor>& ys, std::vector<double>* bytes, std::vector<double>* err) {
    std::vector<Tensor> decoded(ys.size());
    parallel_for(ys.size(), [&](std::size_t i) {
      const CompressedArchive a = uqe_compress(ys[i], bits);
      const std::vector<std::uint8_t> packed = pack_archive(a);
      decoded[i] = uqe_decompress(unpack_archive(packed));
      if (bytes) (*bytes)[i] = static_cast<double>(archive_bytes(a, packed, o.fully_loaded));
      if (err) (*err)[i] = mse(decoded[i], ys[i]);
    });
    return decoded;
  };
  std::vector<double> bytes(yev.size()), err(yev.size());
  const std::vector<Tensor> dtr = transport(ytr, nullptr, nullptr);
  const std::vector<Tensor> dev = transport(yev, &bytes, &err);
  RDPoint p;
  p.method = uqe_method(bits);
  p.setting = std::to_string(bits);
  p.seed = seed;
  p.bytes_per_sample = mean(bytes);
  p.bits_per_sample = 8.0 * p.bytes_per_sample;
  p.distortion_mse = mean(err);
  p.symbols = yev.size() * yev.front().size();
  p.probe_accuracy =
      train_probe(dtr, data.train.labels, dev, data.eval.labels, data.num_classes, probe_config(o, seed)).accuracy;
  return p;
}

RDPoint run_rdc(const MaeModel& model, const Dataset& data, int bit_depth, const BenchOptions& o,
                std::uint64_t seed) {
  auto transport = [&](const std::vector<Tensor>& images, std::vector<double>* bytes, std::vector<double>* err) {
    std::vector<Tensor> decoded(images.size());
    parallel_for(images.size(), [&](std::size_t i) {
      const CompressedArchive a = rdc_compress(images[i], bit_depth);
      const std::vector<std::uint8_t> packed = pack_archive(a);
      decoded[i] = rdc_decompress(unpack_archive(packed));
      if (bytes) (*bytes)[i] = static_cast<double>(archive_bytes(a, packed, o.fully_loaded));
      if (err) (*err)[i] = mse(decoded[i], images[i]);
    });
    return decoded;
  };
  std::vector<double> bytes(data.eval.size()), err(data.eval.size());
  const std::vector<Tensor> dtr = transport(data.train.images, nullptr, nullptr);
  const std::vector<Tensor> dev = transport(data.eval.images, &bytes, &err);
  RDPoint p;
  p.method = fmt::format("RDC-{}", bit_depth);
  p.setting = std::to_string(bit_depth);
  p.seed = seed;
  p.bytes_per_sample = mean(bytes);
  p.bits_per_sample = 8.0 * p.bytes_per_sample;
  p.distortion_mse = mean(err);
  p.probe_accuracy =
      finetune_accuracy(model, dtr, data.train.labels, dev, data.eval.labels, data.num_classes, o, seed);
  return p;
}

void finalize_points(std::vector<RDPoint>& points) {
  auto bits_key = [](const RDPoint& p) { return std::isnan(p.bits_per_sample) ? INFINITY : p.bits_per_sample; };
  std::stable_sort(points.begin(), points.end(), [&](const RDPoint& a, const RDPoint& b) {
    if (a.method != b.method) return a.method < b.method;
    if (bits_key(a) != bits_key(b)) return bits_key(a) < bits_key(b);
    if (a.seed != b.seed) return a.seed < b.seed;
    return a.lambda_rank < b.lambda_rank;
  });
  for (auto& p : points) {
    p.pareto = false;
    if (!p.ok() || std::isnan(p.probe_accuracy)) continue;
    bool dominated = false;
    for (const auto& q : points) {
      if (&q == &p || !q.ok() || q.seed != p.seed || std::isnan(q.probe_accuracy)) continue;
      if (q.bits_per_sample <= p.bits_per_sample && q.probe_accuracy >= p.probe_accuracy &&
          (q.bits_per_sample < p.bits_per_sample || q.probe_accuracy > p.probe_accuracy)) {
        dominated = true;
        break;
      }
    }
    p.pareto = !dominated;
  }
}

std::vector<RDPoint> sweep(const Dataset& data, const BenchOptions& o, const LogFn& log) {
  o.validate();
  auto say = [&](const std::string& msg) {
    if (!log) return;
#pragma omp critical(embcodec_sweep_log)
    log(msg);
  };
  const std::size_t ns = o.seeds.size();
  std::vector<std::unique_ptr<Backbone>> backbones(ns);
  std::vector<std::string> backbone_error(ns);
  {
    const auto count = static_cast<std::ptrdiff_t>(ns);
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
      try {
        backbones[i] = std::make_unique<Backbone>(pretrain_backbone(data, o, o.seeds[i]));
        say(fmt::format("seed {}: backbone ready, R0 = {:.1f} bits, D0 = {:.5f}, c = {:.4g}", o.seeds[i],
                        backbones[i]->rate0, backbones[i]->distortion0, backbones[i]->lambda_scale));
      } catch (const std::exception& e) {
        backbone_error[i] = e.what();
        say(fmt::format("seed {}: pretraining failed: {}", o.seeds[i], e.what()));
      }
    }
  }

  enum class Kind { kNec, kUqe, kRdc };
  struct Job {
    Kind kind;
    std::size_t seed_index;
    int setting;  // lambda rank, bit width or depth
  };
  std::vector<Job> jobs;
  const std::size_t lambda_count = o.lambdas.empty() ? o.lambda_multipliers.size() : o.lambdas.size();
  for (std::size_t s = 0; s < ns; ++s) {
    for (std::size_t r = 0; r < lambda_count; ++r) jobs.push_back({Kind::kNec, s, static_cast<int>(r)});
    for (int b : o.uqe_bits) jobs.push_back({Kind::kUqe, s, b});
    for (int d : o.rdc_depths) jobs.push_back({Kind::kRdc, s, d});
  }

  std::vector<std::vector<RDPoint>> rows(jobs.size());
  const auto count = static_cast<std::ptrdiff_t>(jobs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t j = 0; j < count; ++j) {
    const Job& job = jobs[j];
    const std::uint64_t seed = o.seeds[job.seed_index];
    // Placeholder rows carry method and setting in case the job fails.
    std::vector<RDPoint> stub(job.kind == Kind::kNec && o.prefix ? 2 : 1);
    for (auto& p : stub) p.seed = seed;
    double lambda = RDPoint::kNaN;
    switch (job.kind) {
      case Kind::kNec:
        stub[0].method = "NEC";
        if (stub.size() > 1) stub[1].method = "NEC+prefix";
        if (!o.lambdas.empty()) lambda = o.lambdas[job.setting];
        if (backbones[job.seed_index]) lambda = lambda_grid(*backbones[job.seed_index], o)[job.setting];
        for (auto& p : stub) {
          p.lambda = lambda;
          p.lambda_rank = static_cast<std::size_t>(job.setting);
          p.setting = fmt::format("{:.6g}", lambda);
        }
        break;
      case Kind::kUqe:
        stub[0].method = uqe_method(job.setting);
        stub[0].setting = std::to_string(job.setting);
        break;
      case Kind::kRdc:
        stub[0].method = fmt::format("RDC-{}", job.setting);
        stub[0].setting = std::to_string(job.setting);
        break;
    }
    try {
      if (!backbones[job.seed_index]) throw TrainingError(0, "pretraining failed: " + backbone_error[job.seed_index]);
      const Backbone& bb = *backbones[job.seed_index];
      std::vector<RDPoint> got;
      switch (job.kind) {
        case Kind::kNec: {
          const AdaptedModel a = adapt(bb, data, lambda, o, seed);
          got = run_nec(a.model, a.density, data, lambda, o, seed);
          for (auto& p : got) p.lambda_rank = stub[0].lambda_rank;
          const RDPoint& p = got.front();
          // The 2% bound is meant for grids large enough to hide the flush bytes.
          const std::size_t per_archive = o.model.embed_dim * o.model.tokens(0.0);
          const double gap = std::abs(p.analytic_rate_bits - p.bits_per_sample) / p.bits_per_sample;
          say(fmt::format("seed {} NEC lambda={}: {:.1f} bits/sample (analytic {:.1f}, gap {:.2f}%), acc {:.3f}", seed,
                          p.setting, p.bits_per_sample, p.analytic_rate_bits, 100.0 * gap, p.probe_accuracy));
          if (!o.fully_loaded && per_archive >= 4096 && gap > 0.02) {
            say(fmt::format("seed {} NEC lambda={}: analytic rate off by {:.2f}% (> 2%)", seed, p.setting,
                            100.0 * gap));
          }
          break;
        }
        case Kind::kUqe:
          got.push_back(run_uqe(bb.model, data, job.setting, o, seed));
          break;
        case Kind::kRdc:
          got.push_back(run_rdc(bb.model, data, job.setting, o, seed));
          break;
      }
      if (job.kind != Kind::kNec) {
        say(fmt::format("seed {} {}: {:.1f} bits/sample, acc {:.3f}", seed, got[0].method, got[0].bits_per_sample,
                        got[0].probe_accuracy));
      }
      rows[j] = std::move(got);
    } catch (const std::exception& e) {
      for (auto& p : stub) p.error = e.what();
      say(fmt::format("seed {} {} {}: failed: {}", seed, stub[0].method, stub[0].setting, e.what()));
      rows[j] = std::move(stub);
    }
  }
  std::vector<RDPoint> out;
  for (auto& r : rows)
    for (auto& p : r) out.push_back(std::move(p));
  finalize_points(out);
  return out;
}

std::vector<RDSummary> summarize(std::span<const RDPoint> points) {
  std::vector<RDSummary> out;
  for (const auto& p : points) {
    if (!p.ok()) continue;
    const bool nec = p.method.rfind("NEC", 0) == 0;
    auto it = std::find_if(out.begin(), out.end(), [&](const RDSummary& s) {
      return s.method == p.method && (nec ? s.lambda_rank == p.lambda_rank : s.setting == p.setting);
    });
    if (it == out.end()) {
      RDSummary s;
      s.method = p.method;
      s.setting = p.setting;
      s.lambda_rank = p.lambda_rank;
      s.accuracy_min = INFINITY;
      s.accuracy_max = -INFINITY;
      out.push_back(s);
      it = out.end() - 1;
    } else if (it->setting != p.setting) {
      it->setting = fmt::format("rank{}", p.lambda_rank);
    }
    ++it->count;
    it->bits_per_sample += p.bits_per_sample;
    it->bytes_per_sample += p.bytes_per_sample;
    it->distortion_mse += p.distortion_mse;
    it->analytic_rate_bits += p.analytic_rate_bits;
    it->accuracy += p.probe_accuracy;
    it->accuracy_min = std::min(it->accuracy_min, p.probe_accuracy);
    it->accuracy_max = std::max(it->accuracy_max, p.probe_accuracy);
  }
  for (auto& s : out) {
    const double n = static_cast<double>(s.count);
    s.bits_per_sample /= n;
    s.bytes_per_sample /= n;
    s.distortion_mse /= n;
    s.analytic_rate_bits /= n;
    s.accuracy /= n;
  }
  std::stable_sort(out.begin(), out.end(), [](const RDSummary& a, const RDSummary& b) {
    if (a.method != b.method) return a.method < b.method;
    return a.bits_per_sample < b.bits_per_sample;
  });
  return out;
}

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  return fmt::format("{}", v);
}

std::string base_columns(const RDPoint& p) {
  return fmt::format("{},{},{},{},{},{},{},{},{}", p.method, p.setting, p.seed, num(p.bits_per_sample),
                     num(p.bytes_per_sample), num(p.distortion_mse), num(p.probe_accuracy),
                     num(p.analytic_rate_bits), num(p.one_time_cost_bytes));
}

std::string csv_escape(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

}  // namespace

std::string rd_csv(std::span<const RDPoint> points) {
  std::string out =
      "method,setting,seed,bits_per_sample,bytes_per_sample,distortion_mse,probe_accuracy,analytic_rate_bits,"
      "one_time_cost_bytes\n";
  for (const auto& p : points) out += base_columns(p) + "\n";
  return out;
}

std::string rd_pareto_csv(std::span<const RDPoint> points) {
  std::string out =
      "method,setting,seed,bits_per_sample,bytes_per_sample,distortion_mse,probe_accuracy,analytic_rate_bits,"
      "one_time_cost_bytes,lambda_rank,pareto,error\n";
  for (const auto& p : points) {
    out += fmt::format("{},{},{},{}\n", base_columns(p), p.lambda_rank, p.pareto ? 1 : 0,
                       p.ok() ? std::string() : csv_escape(p.error));
  }
  return out;
}

}  // namespace embcodec
