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

// Quantization-aware training with balanced ternary step sizes.
//
// Every epoch starts by re-deriving the step size of each ternary layer from
// the tertiles of its proxy weights (s = |q1| + |q2|). Batches then run
// forward on the quantized codes, backward through straight-through masks,
// and update the proxies with Adam. Training is two staged: full-precision
// activations first, then QReLU/Bitshift fine-tuning.

#ifndef MOGNET_TRAINING_HPP_
#define MOGNET_TRAINING_HPP_

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mognet/blocks.hpp"
#include "mognet/data.hpp"

namespace mognet {

struct AugmentConfig {
  bool pad_crop = true;  // zero-pad 4 on all sides, crop back at a random offset
  bool hflip = true;     // mirror with probability 1/2
};

struct TrainConfig {
  int epochs_stage1 = 180;
  int epochs_stage2 = 150;
  int decay_start_stage1 = 120;
  int decay_start_stage2 = 80;
  int batch_size = 50;
  double lr = 1e-3;
  double lr_decay_rate = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  bool clip_proxies = true;
  std::uint64_t rng_seed = 1;
  AugmentConfig augment;

  void validate() const;
  // lr * decay^(epoch - decay_start) once epoch passes decay_start; epochs
  // are 1-based.
  double lr_at(int epoch, int decay_start) const;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;
};

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  bool clip = false;  // clamp to [-1, 1] after the update
};

// One bias-corrected Adam update of `param` in place.
void adaptive_moment_step(std::span<double> param, std::span<const double> grad, AdamState& state,
                          double lr, const AdamParams& params);

// Gradient reaching the proxies: dL/dq masked by 1_{|w| <= 1}.
std::vector<double> proxy_gradient(std::span<const double> proxy, std::span<const double> grad_q);

// ---- augmentation -----------------------------------------------------------

// Crop of the 4-pixel zero-padded image whose top-left corner sits at
// (oy, ox) in padded coordinates; (4, 4) returns the original.
std::vector<std::uint8_t> pad_crop(std::span<const std::uint8_t> image, int channels, int height,
                                   int width, int oy, int ox);
std::vector<std::uint8_t> hflip(std::span<const std::uint8_t> image, int channels, int height,
                                int width);
// Augments every image of an (n, c, h, w) byte batch in place.
void augment(std::vector<std::uint8_t>& batch, const Shape4& shape, const AugmentConfig& cfg,
             std::mt19937_64& rng);

// ---- forward/backward ------------------------------------------------------

struct LossResult {
  double loss = 0.0;
  int correct = 0;
  Tensor grad_logits;
};

// Mean softmax cross-entropy over the batch.
LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

struct CflogGrads {
  Tensor reduce;
  Tensor grouped;
};

struct BnParamGrads {
  std::vector<double> gamma;
  std::vector<double> beta;
};

struct MrbGrads {
  CflogGrads first;
  BnParamGrads bn1;
  CflogGrads second;
  BnParamGrads bn2;
};

// Gradients with respect to the quantized codes and BN affine parameters.
struct ModelGrads {
  Tensor stem;
  BnParamGrads stem_bn;
  std::vector<MrbGrads> blocks;
  Tensor head;
  BnParamGrads head_bn;
};

Tensor cflog_backward(const Tensor& grad_out, const Cflog& layer, const CflogCache& cache,
                      CflogGrads& grads);
Tensor mrb_backward(const Tensor& grad_out, const Mrb& block, const MrbCache& cache,
                    ActivationMode mode, MrbGrads& grads);
ModelGrads model_backward(const Model& model, const ModelCache& cache, const Tensor& grad_logits,
                          ActivationMode mode);

// ---- training loop ----------------------------------------------------------

struct EpochMetrics {
  int stage = 0;
  int epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;  // running training accuracy over the epoch
  double lr = 0.0;
  double select_rate = 0.0;   // share of MRB (sample, channel) controls with S = 1
  std::vector<double> steps;  // s_l per ternary layer after the prologue
  std::vector<std::uint8_t> step_updated;

  std::string to_line() const;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

// Step-size prologue of one epoch: tertiles and s_l for every ternary layer
// holding proxies, then requantization. Returns per-layer success flags.
std::vector<std::uint8_t> refresh_step_sizes(Model& model);

// One stage of BTQ training. Deterministic in cfg.rng_seed and `stage`.
std::vector<EpochMetrics> train_btq(Model& model, const Dataset& data, const TrainConfig& cfg,
                                    ActivationMode mode, int stage, int epochs, int decay_start,
                                    const EpochCallback& on_epoch = {});

// Full-precision-activation stage, then quantized fine-tuning. Ends with
// Model::freeze().
std::vector<EpochMetrics> two_stage_train(Model& model, const Dataset& data,
                                          const TrainConfig& cfg,
                                          const EpochCallback& on_epoch = {});

// Sets every BN's moving statistics to the batch statistics seen on
// `images`, layer by layer.
void calibrate_bn(Model& model, const Tensor& images, ActivationMode mode);

// Real-valued engine predictions (quantized activations, inference BN).
std::vector<int> predict(const Model& model, const Dataset& data, int batch_size = 100);
double accuracy(const Model& model, const Dataset& data);

}  // namespace mognet

#endif  // MOGNET_TRAINING_HPP_
