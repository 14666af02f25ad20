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

// Integer-only forward pass.
//
// Activations are k-bit levels v with real value v / (2^k - 1); the input
// image is an 8-bit level tensor with scale 1/255. Every convolution
// accumulates level x code products in int32. BN followed by QReLU is folded
// into per-channel integer thresholds on the accumulator, the residual
// rescale is an add and a right shift (an OR when k = 1), TGAP compares an
// integer channel sum, and only the final per-class BN is carried in 32.16
// fixed point.
//
// Contract: every activation produced here equals (2^k - 1) times the
// corresponding activation of model_forward() on the same frozen model.

#ifndef MOGNET_INT_INFERENCE_HPP_
#define MOGNET_INT_INFERENCE_HPP_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mognet/blocks.hpp"

namespace mognet {

using IntTensor = Tensor4<std::int32_t>;

struct QuantTensor {
  IntTensor values;
  int k = 8;

  // Throws ShapeError if any value is outside [0, 2^k - 1].
  void validate() const;
};

// Per channel, 2^k - 1 thresholds on the raw accumulator. With positive
// polarity threshold l is the smallest accumulator whose level is >= l and
// requantize counts thresholds <= acc; with negative polarity it is the
// largest such accumulator and requantize counts thresholds >= acc.
// Thresholds are non-decreasing in l for positive polarity and
// non-increasing for negative polarity; levels no accumulator in range
// reaches sit just outside the range.
class ThresholdBank {
 public:
  ThresholdBank() = default;
  ThresholdBank(int channels, int k);

  int channels() const { return channels_; }
  int k() const { return k_; }
  int levels() const { return levels_; }
  bool negative(int c) const { return negative_[c] != 0; }
  std::int64_t threshold(int c, int level) const {
    return thresholds_[static_cast<std::size_t>(c) * levels_ + (level - 1)];
  }
  void set(int c, int level, std::int64_t t) {
    thresholds_[static_cast<std::size_t>(c) * levels_ + (level - 1)] = t;
  }
  void set_negative(int c, bool neg) { negative_[c] = neg; }

  int requantize(int c, std::int64_t acc) const;
  IntTensor requantize(const IntTensor& acc) const;

 private:
  int channels_ = 0;
  int k_ = 1;
  int levels_ = 1;
  std::vector<std::int64_t> thresholds_;
  std::vector<std::uint8_t> negative_;
};

// Folds inference-mode BN and k-bit QReLU into thresholds for accumulators
// in [-acc_bound, acc_bound] whose real value is acc / scale_den.
ThresholdBank fold_bn_qrelu(const BNParams& bn, int k, std::int64_t scale_den,
                            std::int64_t acc_bound);

// Reference the fold must reproduce: qrelu_level(bn(acc / scale_den)).
int bn_qrelu_level(const BnChannel& ch, int k, std::int64_t acc, std::int64_t scale_den);

struct IntCflog {
  Tensor4<std::int8_t> reduce;
  Tensor4<std::int8_t> grouped;
  Tensor4<std::int8_t> expand;
  int groups = 1;
};

struct IntMrb {
  IntCflog first;
  ThresholdBank bank1;
  IntCflog second;
  ThresholdBank bank2;
};

// logit_c * 2^16 * h * w = scale_c * sum(acc_c) + h * w * offset_c.
struct FixedPointHead {
  static constexpr int kFracBits = 16;
  std::vector<std::int64_t> scale;
  std::vector<std::int64_t> offset;
};

struct IntPrediction {
  std::vector<std::int64_t> scores;
  int label = 0;
};

using IntTrace = std::vector<std::pair<std::string, IntTensor>>;

class IntModel {
 public:
  // Throws InternalError if the configuration's worst-case accumulator does
  // not fit in 32 bits.
  explicit IntModel(const Model& model);

  const ModelConfig& config() const { return cfg_; }
  const ThresholdBank& stem_bank() const { return stem_bank_; }
  const std::vector<IntMrb>& blocks() const { return blocks_; }
  const FixedPointHead& head() const { return head_; }

  // `images` is an (n, c, h, w) tensor of 8-bit pixel levels.
  std::vector<IntPrediction> forward(const QuantTensor& images, IntTrace* trace = nullptr) const;
  IntPrediction forward_one(const std::vector<std::uint8_t>& pixels) const;

 private:
  IntTensor cflog(const IntTensor& x, const IntCflog& layer) const;

  ModelConfig cfg_;
  Tensor4<std::int8_t> stem_;
  ThresholdBank stem_bank_;
  std::vector<IntMrb> blocks_;
  Tensor4<std::int8_t> head_w_;
  FixedPointHead head_;
};

QuantTensor pixels_to_quant(const std::vector<std::uint8_t>& pixels, Shape4 shape);

}  // namespace mognet

#endif  // MOGNET_INT_INFERENCE_HPP_
