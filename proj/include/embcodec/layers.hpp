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

#ifndef EMBCODEC_LAYERS_HPP_
#define EMBCODEC_LAYERS_HPP_

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "embcodec/random.hpp"
#include "embcodec/tensor.hpp"

namespace embcodec::nn {

// Layers hold no storage of their own. Each spec records offsets into a flat
// parameter vector owned by the model, and forward/backward take that vector
// (and a same-sized gradient vector) explicitly. Activations are token-major:
// a sequence of T tokens of width d is a T x d tensor.

struct Segment {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
  int group = 0;
};

class ParamLayout {
 public:
  std::size_t add(std::string name, std::size_t count, int group);
  std::size_t total() const noexcept { return total_; }
  const std::vector<Segment>& segments() const noexcept { return segments_; }

 private:
  std::vector<Segment> segments_;
  std::size_t total_ = 0;
};

struct LinearSpec {
  std::size_t w = 0, b = 0;  // W is out x in, row-major
  std::size_t in = 0, out = 0;
  bool has_bias = true;
};

struct NormSpec {
  std::size_t gamma = 0, beta = 0;
  std::size_t dim = 0;
};

// The key projection has no bias: softmax ignores a per-row shift, so a key
// bias would never receive gradient. Query and value biases live in qv_bias.
struct AttentionSpec {
  LinearSpec qkv, proj;
  std::size_t qv_bias = 0;
  std::size_t heads = 1;
};

struct MlpSpec {
  LinearSpec fc1, fc2;
};

struct BlockSpec {
  NormSpec ln1;
  AttentionSpec attn;
  NormSpec ln2;
  MlpSpec mlp;
};

LinearSpec add_linear(ParamLayout& layout, const std::string& name, std::size_t in, std::size_t out, int group);
NormSpec add_norm(ParamLayout& layout, const std::string& name, std::size_t dim, int group);
BlockSpec add_block(ParamLayout& layout, const std::string& name, std::size_t dim, std::size_t heads,
                    std::size_t mlp_ratio, int group);

// Xavier-uniform weights, zero biases; unit gain and zero shift for norms.
void init_linear(std::span<double> p, const LinearSpec& s, Rng& rng);
void init_norm(std::span<double> p, const NormSpec& s);
void init_block(std::span<double> p, const BlockSpec& s, Rng& rng);

Tensor linear_forward(std::span<const double> p, const LinearSpec& s, const Tensor& x);
// Accumulates dW, db into g and returns dx.
Tensor linear_backward(std::span<const double> p, std::span<double> g, const LinearSpec& s, const Tensor& x,
                       const Tensor& dy);

struct NormCache {
  Tensor xhat;
  std::vector<double> inv_std;
};
Tensor norm_forward(std::span<const double> p, const NormSpec& s, const Tensor& x, NormCache* cache);
Tensor norm_backward(std::span<const double> p, std::span<double> g, const NormSpec& s, const NormCache& cache,
                     const Tensor& dy);

struct AttentionCache {
  Tensor x, qkv, ctx;
  std::vector<Tensor> probs;  // one T x T matrix per head
};
Tensor attention_forward(std::span<const double> p, const AttentionSpec& s, const Tensor& x, AttentionCache* cache);
Tensor attention_backward(std::span<const double> p, std::span<double> g, const AttentionSpec& s,
                          const AttentionCache& cache, const Tensor& dy);

double gelu(double x) noexcept;
double gelu_grad(double x) noexcept;

struct MlpCache {
  Tensor x, pre, act;
};
Tensor mlp_forward(std::span<const double> p, const MlpSpec& s, const Tensor& x, MlpCache* cache);
Tensor mlp_backward(std::span<const double> p, std::span<double> g, const MlpSpec& s, const MlpCache& cache,
                    const Tensor& dy);

// Pre-norm transformer block: x + attn(ln1(x)), then + mlp(ln2(.)).
struct BlockCache {
  NormCache n1, n2;
  AttentionCache attn;
  MlpCache mlp;
};
Tensor block_forward(std::span<const double> p, const BlockSpec& s, const Tensor& x, BlockCache* cache);
Tensor block_backward(std::span<const double> p, std::span<double> g, const BlockSpec& s, const BlockCache& cache,
                      const Tensor& dy);

// Fixed 2-D sine-cosine position table for a grid x grid layout, with an
// all-zero first row for the class token: (grid^2 + 1) x dim.
Tensor sincos_position_table(std::size_t dim, std::size_t grid);

}  // namespace embcodec::nn

#endif  // EMBCODEC_LAYERS_HPP_
