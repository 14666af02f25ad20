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

#include "mognet/int_inference.hpp"

#include <cmath>
#include <limits>

namespace mognet {

void QuantTensor::validate() const {
  const std::int32_t top = max_level(k);
  for (std::int32_t v : values.values()) {
    if (v < 0 || v > top) {
      throw ShapeError("quantized value " + std::to_string(v) + " outside [0, " +
                       std::to_string(top) + "]");
    }
  }
}

QuantTensor pixels_to_quant(const std::vector<std::uint8_t>& pixels, Shape4 shape) {
  if (pixels.size() != shape.size()) throw ShapeError("pixel buffer does not match shape");
  IntTensor t(shape);
  auto dst = t.values();
  for (std::size_t i = 0; i < pixels.size(); ++i) dst[i] = pixels[i];
  return {std::move(t), 8};
}

// ---- threshold banks --------------------------------------------------------

ThresholdBank::ThresholdBank(int channels, int k)
    : channels_(channels),
      k_(k),
      levels_(max_level(k)),
      thresholds_(static_cast<std::size_t>(channels) * levels_, 0),
      negative_(channels, 0) {}

int ThresholdBank::requantize(int c, std::int64_t acc) const {
  const std::int64_t* t = thresholds_.data() + static_cast<std::size_t>(c) * levels_;
  int level = 0;
  if (negative_[c]) {
    for (int l = 0; l < levels_; ++l) level += acc <= t[l];
  } else {
    for (int l = 0; l < levels_; ++l) level += t[l] <= acc;
  }
  return level;
}

IntTensor ThresholdBank::requantize(const IntTensor& acc) const {
  if (acc.c() != channels_) throw ShapeError("threshold bank channel count mismatch");
  IntTensor out(acc.shape());
  const std::size_t hw = static_cast<std::size_t>(acc.h()) * acc.w();
  for (int b = 0; b < acc.n(); ++b) {
    for (int c = 0; c < acc.c(); ++c) {
      const std::int32_t* src = acc.plane(b, c);
      std::int32_t* dst = out.plane(b, c);
      for (std::size_t i = 0; i < hw; ++i) dst[i] = requantize(c, src[i]);
    }
  }
  return out;
}

int bn_qrelu_level(const BnChannel& ch, int k, std::int64_t acc, std::int64_t scale_den) {
  return qrelu_level(ch.apply(static_cast<double>(acc) / static_cast<double>(scale_den)), k);
}

ThresholdBank fold_bn_qrelu(const BNParams& bn, int k, std::int64_t scale_den,
                            std::int64_t acc_bound) {
  bn.validate();
  if (scale_den <= 0 || acc_bound < 0) throw ConfigError("fold_bn_qrelu: bad accumulator scale");
  ThresholdBank bank(bn.channels(), k);
  const std::int64_t lo = -acc_bound;
  const std::int64_t hi = acc_bound;
  for (int c = 0; c < bn.channels(); ++c) {
    const BnChannel ch = bn.channel(c);
    auto level = [&](std::int64_t acc) { return bn_qrelu_level(ch, k, acc, scale_den); };
    // Every floating-point step of BnChannel::apply is monotone in acc, with
    // direction given by the sign of gamma, so a bisection on the exact
    // expression the real engine evaluates reproduces it everywhere.
    const bool negative = ch.gamma < 0.0;
    bank.set_negative(c, negative);
    for (int l = 1; l <= bank.levels(); ++l) {
      if (!negative) {
        if (level(hi) < l) {
          bank.set(c, l, hi + 1);
          continue;
        }
        std::int64_t a = lo;
        std::int64_t b = hi;
        while (a < b) {
          const std::int64_t mid = a + (b - a) / 2;
          if (level(mid) >= l) b = mid; else a = mid + 1;
        }
        bank.set(c, l, a);
      } else {
        if (level(lo) < l) {
          bank.set(c, l, lo - 1);
          continue;
        }
        std::int64_t a = lo;
        std::int64_t b = hi;
        while (a < b) {
          const std::int64_t mid = a + (b - a + 1) / 2;
          if (level(mid) >= l) a = mid; else b = mid - 1;
        }
        bank.set(c, l, a);
      }
    }
  }
  return bank;
}

// ---- engine -----------------------------------------------------------------

IntModel::IntModel(const Model& model) : cfg_(model.cfg) {
  cfg_.validate();
  if (worst_case_accumulator(cfg_) > std::numeric_limits<std::int32_t>::max()) {
    throw InternalError("worst-case accumulator exceeds the 32-bit accumulator");
  }
  const std::int64_t top = max_level(cfg_.k);
  const std::int64_t m = cfg_.latent();
  const std::int64_t stem_bound = std::int64_t{cfg_.in_channels} * 9 * 255;
  const std::int64_t cflog_bound = m * 9 * (m / cfg_.groups) * cfg_.n * top;

  stem_ = model.stem.weight();
  stem_bank_ = fold_bn_qrelu(model.stem_bn, cfg_.k, 255, stem_bound);
  for (const Mrb& b : model.blocks) {
    auto lower = [](const Cflog& c) {
      return IntCflog{c.reduce.weight(), c.grouped.weight(), c.expand.weight(), c.cfg.groups};
    };
    blocks_.push_back(IntMrb{lower(b.first), fold_bn_qrelu(b.bn1, cfg_.k, top, cflog_bound),
                             lower(b.second), fold_bn_qrelu(b.bn2, cfg_.k, top, cflog_bound)});
  }
  head_w_ = model.head.weight();
  const double one = std::ldexp(1.0, FixedPointHead::kFracBits);
  for (int c = 0; c < model.head_bn.channels(); ++c) {
    const BnChannel ch = model.head_bn.channel(c);
    head_.scale.push_back(std::llround(ch.gamma / ch.denom / static_cast<double>(top) * one));
    head_.offset.push_back(std::llround((ch.beta - ch.gamma * ch.mean / ch.denom) * one));
  }
}

IntTensor IntModel::cflog(const IntTensor& x, const IntCflog& layer) const {
  const IntTensor reduced = conv2d<std::int32_t>(x, layer.reduce, 1, Padding::kSame);
  const IntTensor grouped = conv2d<std::int32_t>(reduced, layer.grouped, layer.groups, Padding::kSame);
  return conv2d<std::int32_t>(grouped, layer.expand, 1, Padding::kSame);
}

std::vector<IntPrediction> IntModel::forward(const QuantTensor& images, IntTrace* trace) const {
  if (images.k != 8) throw ShapeError("input images must be 8-bit levels");
  if (images.values.c() != cfg_.in_channels || images.values.h() != cfg_.image_size ||
      images.values.w() != cfg_.image_size) {
    throw ShapeError("input geometry " + images.values.shape().str() + " does not match the model");
  }
  images.validate();
  const int k = cfg_.k;
  const std::int64_t top = max_level(k);

  IntTensor h = stem_bank_.requantize(conv2d<std::int32_t>(images.values, stem_, 1, Padding::kSame));
  if (trace != nullptr) trace->emplace_back("stem", h);

  int idx = 0;
  for (int s = 0; s < cfg_.stages; ++s) {
    for (int j = 0; j < cfg_.blocks_per_stage; ++j, ++idx) {
      const IntMrb& blk = blocks_[idx];
      const IntTensor h1 = blk.bank1.requantize(cflog(h, blk.first));
      const IntTensor i1 = blk.bank2.requantize(cflog(h1, blk.second));
      IntTensor out(h.shape());
      const std::int64_t hw = std::int64_t{h.h()} * h.w();
      for (int b = 0; b < h.n(); ++b) {
        for (int c = 0; c < h.c(); ++c) {
          const std::int32_t* xs = h.plane(b, c);
          const std::int32_t* is = i1.plane(b, c);
          std::int32_t* os = out.plane(b, c);
          std::int64_t sum = 0;
          for (std::int64_t i = 0; i < hw; ++i) sum += xs[i];
          if (2 * sum > top * hw) {
            std::copy(is, is + hw, os);
          } else if (k == 1) {
            for (std::int64_t i = 0; i < hw; ++i) os[i] = xs[i] | is[i];
          } else {
            for (std::int64_t i = 0; i < hw; ++i) {
              os[i] = static_cast<std::int32_t>(static_cast<std::uint32_t>(xs[i] + is[i]) >> 1);
            }
          }
        }
      }
      if (trace != nullptr) {
        const std::string name = "block" + std::to_string(idx);
        trace->emplace_back(name + ".h1", h1);
        trace->emplace_back(name + ".i1", i1);
        trace->emplace_back(name + ".out", out);
      }
      h = std::move(out);
    }
    h = maxpool2x2(h);
    if (trace != nullptr) trace->emplace_back("stage" + std::to_string(s) + ".pool", h);
  }

  const IntTensor acc = conv2d<std::int32_t>(h, head_w_, 1, Padding::kSame);
  const std::int64_t hw = std::int64_t{acc.h()} * acc.w();
  std::vector<IntPrediction> preds(acc.n());
  for (int b = 0; b < acc.n(); ++b) {
    IntPrediction& p = preds[b];
    p.scores.resize(acc.c());
    for (int c = 0; c < acc.c(); ++c) {
      const std::int32_t* src = acc.plane(b, c);
      std::int64_t sum = 0;
      for (std::int64_t i = 0; i < hw; ++i) sum += src[i];
      p.scores[c] = head_.scale[c] * sum + hw * head_.offset[c];
      if (p.scores[c] > p.scores[p.label]) p.label = c;
    }
  }
  return preds;
}

IntPrediction IntModel::forward_one(const std::vector<std::uint8_t>& pixels) const {
  const Shape4 shape{1, cfg_.in_channels, cfg_.image_size, cfg_.image_size};
  return forward(pixels_to_quant(pixels, shape)).front();
}

}  // namespace mognet
