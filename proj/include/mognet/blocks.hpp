// Copyright 2026 The MOGNET Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Network building blocks and the full model graph.
//
//   stem:  3x3 ternary conv (in -> n) -> BN -> act
//   stage: {MRB} x blocks_per_stage -> 2x2 maxpool, repeated `stages` times
//   head:  1x1 binary conv (n -> classes) -> BN -> GAP -> logits
//
// A CFLOG layer is pointwise (binary, c_in -> m) -> grouped 3x3 (ternary,
// m -> m, g groups) -> pointwise (CA generated, m -> c_out) with nothing in
// between. An MRB chains two CFLOG+BN+act pairs and merges the result with
// its input through a per-channel multiplexer driven by thresholded global
// average pooling of the input.

#ifndef MOGNET_BLOCKS_HPP_
#define MOGNET_BLOCKS_HPP_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mognet/ca.hpp"
#include "mognet/quantizers.hpp"
#include "mognet/tensor.hpp"

namespace mognet {

struct ModelConfig {
  int n = 128;               // feature maps after the stem
  int groups = 4;            // g of the grouped convolutions
  int k = 3;                 // activation bitwidth
  int stages = 3;            // {MRB..., maxpool} stages
  int blocks_per_stage = 1;  // MRBs per stage
  int class_count = 10;
  int in_channels = 3;
  int image_size = 32;
  int ca_rule = 30;
  bool shared_ca_seed = false;  // one seed row for every CFLOG layer
  std::uint64_t master_seed = 1;

  int latent() const { return n / 2; }
  // Throws ConfigError naming the offending field.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

enum class WeightKind : std::uint8_t { kBinary = 1, kTernary = 2 };

// Learnable quantized weight: real proxies plus the codes the forward pass
// uses. Imported checkpoints carry codes only.
struct QuantWeight {
  WeightKind kind = WeightKind::kBinary;
  Shape4 shape;
  std::vector<double> proxy;
  TernarySpec spec;  // ternary only
  std::vector<std::int8_t> codes;

  QuantWeight() = default;
  QuantWeight(WeightKind kind, Shape4 shape) : kind(kind), shape(shape), codes(shape.size(), 0) {}

  bool has_proxy() const { return !proxy.empty(); }
  // codes <- q(proxy; step) or sign(proxy).
  void requantize();
  Tensor4<std::int8_t> weight() const { return Tensor4<std::int8_t>(shape, codes); }
  Tensor real_weight() const;
};

struct CflogConfig {
  int c_in = 0;
  int c_out = 0;
  int latent = 0;
  int groups = 1;
  CAConfig ca;

  void validate() const;
};

struct Cflog {
  CflogConfig cfg;
  QuantWeight reduce;   // (latent, c_in, 1, 1) binary
  QuantWeight grouped;  // (latent, latent / groups, 3, 3) ternary
  CAKernel expand;      // regenerated from cfg.ca, never trained

  explicit Cflog(CflogConfig config);
  Tensor expand_weight() const;
};

struct Mrb {
  Cflog first;
  BNParams bn1;
  Cflog second;
  BNParams bn2;
};

struct Model {
  ModelConfig cfg;
  QuantWeight stem;
  BNParams stem_bn;
  std::vector<Mrb> blocks;
  QuantWeight head;
  BNParams head_bn;

  int latent() const { return cfg.latent(); }
  // Every ternary weight in Algorithm order: stem, then the grouped
  // convolution of each CFLOG.
  std::vector<QuantWeight*> ternary_layers();
  std::vector<QuantWeight*> binary_layers();
  std::vector<BNParams*> bn_layers();
  std::vector<const BNParams*> bn_layers() const;
  // Rounds BN parameters to binary32 so the checkpoint is an exact image.
  void freeze();
};

// Largest |accumulator| any integer-engine layer can produce for cfg, from
// channel counts and activation ranges alone.
std::int64_t worst_case_accumulator(const ModelConfig& cfg);

// Deterministic in cfg.master_seed: proxies uniform in [-1, 1], one CA seed
// row per CFLOG (or one shared row), step sizes from the initial tertiles.
Model build_model(const ModelConfig& cfg);

// ---- block-level operations -------------------------------------------------

Tensor cflog_forward(const Tensor& x, const Cflog& layer);

// S_c = 1 iff GAP(x)_c > 0.5 * tgap_max. Result has one entry per
// (sample, channel), sample-major.
std::vector<std::uint8_t> tgap(const Tensor& x, double tgap_max);
// Same threshold for tensors holding k-bit codewords with tgap_max = 1,
// evaluated on recovered integer levels: 2 * sum > L * h * w.
std::vector<std::uint8_t> tgap_codewords(const Tensor& x, int k);
// Full-precision variant: tgap_max is the largest channel mean of each
// sample.
std::vector<std::uint8_t> tgap_full_precision(const Tensor& x);

// out[b, c] = s[b, c] ? i1[b, c] : i0[b, c].
Tensor mux(const Tensor& i0, const Tensor& i1, const std::vector<std::uint8_t>& s);

enum class ActivationMode {
  kFullPrecision,  // ReLU, linear rescale after the residual add
  kQuantized,      // QReLU, Bitshift
};

struct ForwardOptions {
  ActivationMode activation = ActivationMode::kQuantized;
  bool training = false;  // BN batch statistics and caches for backward
};

// Saved activations for the backward pass of one CFLOG.
struct CflogCache {
  Tensor input;
  Tensor reduced;
  Tensor grouped;
};

struct MrbCache {
  Tensor input;
  CflogCache c1;
  BnCache bn1;
  Tensor z1;
  Tensor h1;
  CflogCache c2;
  BnCache bn2;
  Tensor z2;
  Tensor i1;
  std::vector<std::uint8_t> select;
};

struct MrbOutputs {
  Tensor h1;
  Tensor i1;
  Tensor out;
  std::vector<std::uint8_t> select;
};

MrbOutputs mrb_forward(const Tensor& x, Mrb& block, int k, const ForwardOptions& opts,
                       MrbCache* cache = nullptr);
// Inference-mode convenience overload.
Tensor mrb_forward(const Tensor& x, const Mrb& block, int k);

struct ModelCache {
  Tensor input;
  Tensor stem_z;
  BnCache stem_bn;
  std::vector<MrbCache> blocks;
  std::vector<Tensor> pool_inputs;  // one per stage
  Tensor head_input;
  Tensor head_z;
  BnCache head_bn;
};

// Named quantized activations in forward order.
using RealTrace = std::vector<std::pair<std::string, Tensor>>;

// Images scaled to [0, 1] in NCHW; returns logits (n, classes, 1, 1).
Tensor model_forward(Model& model, const Tensor& images, const ForwardOptions& opts,
                     ModelCache* cache = nullptr, RealTrace* trace = nullptr);
// Inference-mode, quantized-activation forward (the real-valued engine).
Tensor model_forward(const Model& model, const Tensor& images, RealTrace* trace = nullptr);

Tensor images_to_tensor(const std::vector<std::uint8_t>& pixels, Shape4 shape);

// ---- accounting -------------------------------------------------------------

struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  Rational() = default;
  Rational(std::int64_t n, std::int64_t d);
  Rational operator+(const Rational& o) const;
  Rational operator*(const Rational& o) const;
  Rational operator/(const Rational& o) const;
  bool operator==(const Rational&) const = default;
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  std::string str() const;
};

struct CompressionRate {
  Rational closed_form;       // (C_i / C_o) * (1/18 + 1/(4g))
  Rational counted;           // (C_i m + 9 m^2 / g) / (9 C_i C_o), m = C_i / 2
  std::int64_t cflog_params;  // trainable CFLOG parameters
  std::int64_t conv_params;   // regular 3x3 convolution parameters
};

CompressionRate compression_rate(int c_in, int c_out, int groups);

struct ParamCensus {
  std::int64_t ternary = 0;
  std::int64_t binary = 0;
  std::int64_t ca_fixed = 0;  // generated, not trainable
  std::int64_t bn_channels = 0;

  std::int64_t trainable_weights() const { return ternary + binary; }
};

ParamCensus census(const ModelConfig& cfg);

struct SizeRow {
  std::string layer;
  std::string kind;
  std::int64_t count = 0;
  int bits_each = 0;
  std::int64_t bits = 0;
};

struct SizeReport {
  std::vector<SizeRow> rows;
  std::vector<std::pair<std::string, CompressionRate>> cflog_rates;
  std::int64_t total_bits = 0;
  int bn_bits = 16;
  // Published size of the n=128, g=4 network; printed for comparison only.
  double reference_mb = 0.0;

  double megabits() const { return static_cast<double>(total_bits) / 1e6; }
  std::string text() const;
  // One key=value record per line.
  std::string key_values() const;
};

// Binary weights at 1 bit, ternary at 2, CA kernels at 0 plus their seed row
// width, BN at 4 values of bn_bits per channel.
SizeReport size_report(const ModelConfig& cfg, int bn_bits = 16);

}  // namespace mognet

#endif  // MOGNET_BLOCKS_HPP_
