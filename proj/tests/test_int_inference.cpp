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

#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "mognet/int_inference.hpp"
#include "mognet/training.hpp"
#include "oracles.hpp"

using namespace mognet;

namespace {

ModelConfig small_config(int n, int k, int g = 2) {
  ModelConfig c;
  c.n = n;
  c.groups = g;
  c.k = k;
  c.stages = 2;
  c.class_count = 4;
  c.image_size = 8;
  return c;
}

// Random BN statistics, including negative and tiny slopes.
void randomize_bn(Model& m, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (BNParams* bn : m.bn_layers()) {
    for (int c = 0; c < bn->channels(); ++c) {
      bn->gamma[c] = u(rng) * 2.0;
      if (rng() % 8 == 0) bn->gamma[c] = 0.0;
      bn->beta[c] = u(rng);
      bn->moving_mean[c] = u(rng) * 4.0;
      bn->moving_var[c] = std::abs(u(rng)) * 9.0 + 0.01;
    }
  }
  m.freeze();
}

QuantTensor random_images(int n, const ModelConfig& c, std::mt19937_64& rng) {
  std::vector<std::uint8_t> px(static_cast<std::size_t>(n) * c.in_channels * c.image_size * c.image_size);
  for (auto& v : px) v = static_cast<std::uint8_t>(rng() % 256);
  return pixels_to_quant(px, {n, c.in_channels, c.image_size, c.image_size});
}

Tensor to_real(const QuantTensor& q) {
  Tensor t(q.values.shape());
  for (std::size_t i = 0; i < t.size(); ++i) t.raw()[i] = q.values.raw()[i] / 255.0;
  return t;
}

}  // namespace

TEST_SUITE("int_inference") {

TEST_CASE("fold: unit BN with k = 1 thresholds at the first positive accumulator") {
  BNParams bn(1);
  const ThresholdBank bank = fold_bn_qrelu(bn, 1, 1, 50);
  CHECK(bank.levels() == 1);
  CHECK_FALSE(bank.negative(0));
  // Exhaustive scan: smallest acc whose BN image is positive.
  std::int64_t first = 51;
  for (std::int64_t a = -50; a <= 50; ++a) {
    if (bn.channel(0).apply(static_cast<double>(a)) > 0.0) {
      first = a;
      break;
    }
  }
  CHECK(first == 1);
  CHECK(bank.threshold(0, 1) == first);
}

TEST_CASE("fold: negative slope flips polarity") {
  BNParams bn(1);
  bn.gamma[0] = -0.8;
  bn.beta[0] = 0.4;
  const ThresholdBank bank = fold_bn_qrelu(bn, 2, 3, 30);
  CHECK(bank.negative(0));
  int prev = 4;
  for (std::int64_t a = -30; a <= 30; ++a) {
    const int l = bank.requantize(0, a);
    CHECK(l <= prev);
    prev = l;
  }
}

TEST_CASE("fold: exhaustive agreement with the real composition") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 1; k <= 3; ++k) {
    for (int trial = 0; trial < 40; ++trial) {
      BNParams bn(3);
      for (int c = 0; c < 3; ++c) {
        bn.gamma[c] = u(rng) * 3.0;
        bn.beta[c] = u(rng);
        bn.moving_mean[c] = u(rng) * 20.0;
        bn.moving_var[c] = std::abs(u(rng)) * 50.0;
      }
      if (trial == 0) bn.gamma[1] = 0.0;
      bn.round_to_float();
      const std::int64_t scale = trial % 2 ? 7 : 255;
      const std::int64_t bound = 600;
      const ThresholdBank bank = fold_bn_qrelu(bn, k, scale, bound);
      for (int c = 0; c < 3; ++c) {
        const BnChannel ch = bn.channel(c);
        for (std::int64_t a = -bound; a <= bound; ++a) {
          REQUIRE(bank.requantize(c, a) == qrelu_level(ch.apply(static_cast<double>(a) / scale), k));
        }
      }
    }
  }
}

TEST_CASE("fold: zero slope gives a constant bank") {
  BNParams bn(1);
  bn.gamma[0] = 0.0;
  bn.beta[0] = 0.45;
  const ThresholdBank bank = fold_bn_qrelu(bn, 3, 7, 100);
  for (std::int64_t a = -100; a <= 100; ++a) CHECK(bank.requantize(0, a) == qrelu_level(0.45, 3));
}

TEST_CASE("threshold banks are monotone and surjective over a wide range") {
  BNParams bn(2);
  bn.gamma = {1.0, -1.0};
  bn.moving_var = {100.0, 100.0};
  const ThresholdBank bank = fold_bn_qrelu(bn, 3, 1, 200);
  for (int c = 0; c < 2; ++c) {
    std::vector<int> seen(8, 0);
    int prev = bank.requantize(c, -200);
    for (std::int64_t a = -200; a <= 200; ++a) {
      const int l = bank.requantize(c, a);
      if (c == 0) CHECK(l >= prev); else CHECK(l <= prev);
      prev = l;
      seen[l] = 1;
    }
    for (int s : seen) CHECK(s == 1);
    for (int l = 2; l <= 7; ++l) {
      if (c == 0) CHECK(bank.threshold(c, l) >= bank.threshold(c, l - 1));
      else CHECK(bank.threshold(c, l) <= bank.threshold(c, l - 1));
    }
  }
}

TEST_CASE("integer shift equals floor division for non-negative sums") {
  for (int s = 0; s <= 4096; ++s) {
    CHECK((s >> 1) == s / 2);
    CHECK(((s + 1) >> 1) == (s + 1) / 2);
  }
  for (int a = 0; a <= 1; ++a)
    for (int b = 0; b <= 1; ++b) CHECK(bitshift_level(a + b, 1) == (a | b));
}

TEST_CASE("integer layers equal scaled real layers on random models") {
  std::mt19937_64 rng(31);
  for (int k = 1; k <= 3; ++k) {
    for (int n : {8, 16}) {
      const ModelConfig cfg = small_config(n, k);
      Model model = build_model(cfg);
      randomize_bn(model, rng);
      const IntModel im(model);
      const QuantTensor images = random_images(20, cfg, rng);
      IntTrace itrace;
      RealTrace rtrace;
      const auto preds = im.forward(images, &itrace);
      const Tensor logits = model_forward(model, to_real(images), &rtrace);
      REQUIRE(itrace.size() == rtrace.size());
      const int top = max_level(k);
      for (std::size_t l = 0; l < itrace.size(); ++l) {
        CHECK(itrace[l].first == rtrace[l].first);
        const auto& iv = itrace[l].second.raw();
        const auto& rv = rtrace[l].second.raw();
        REQUIRE(iv.size() == rv.size());
        std::size_t mismatches = 0;
        for (std::size_t i = 0; i < iv.size(); ++i) mismatches += static_cast<double>(iv[i]) != rv[i] * top;
        CHECK_MESSAGE(mismatches == 0, "layer " << itrace[l].first);
      }
      for (int b = 0; b < 20; ++b) {
        int arg = 0;
        for (int c = 1; c < cfg.class_count; ++c) {
          if (logits.at(b, c, 0, 0) > logits.at(b, arg, 0, 0)) arg = c;
        }
        CHECK(preds[b].label == arg);
      }
    }
  }
}

TEST_CASE("all-zero input gives BN-determined constant scores") {
  std::mt19937_64 rng(4);
  const ModelConfig cfg = small_config(8, 2);
  Model model = build_model(cfg);
  randomize_bn(model, rng);
  const IntModel im(model);
  const std::vector<std::uint8_t> zeros(3 * 8 * 8, 0);
  const IntPrediction a = im.forward_one(zeros);
  const IntPrediction b = im.forward_one(zeros);
  CHECK(a.scores == b.scores);
  CHECK(a.scores.size() == 4);
}

TEST_CASE("fixed-point head tracks the real logits") {
  std::mt19937_64 rng(6);
  const ModelConfig cfg = small_config(16, 3);
  Model model = build_model(cfg);
  randomize_bn(model, rng);
  const IntModel im(model);
  const QuantTensor images = random_images(10, cfg, rng);
  const auto preds = im.forward(images);
  const Tensor logits = model_forward(model, to_real(images));
  const int hw = (cfg.image_size >> cfg.stages) * (cfg.image_size >> cfg.stages);
  for (int b = 0; b < 10; ++b)
    for (int c = 0; c < cfg.class_count; ++c) {
      const double fixed = static_cast<double>(preds[b].scores[c]) / (65536.0 * hw);
      // Rounding of the two 32.16 constants bounds the error.
      CHECK(std::abs(fixed - logits.at(b, c, 0, 0)) < 1e-3);
    }
}

TEST_CASE("inputs are validated") {
  const ModelConfig cfg = small_config(8, 2);
  const IntModel im(build_model(cfg));
  CHECK_THROWS_AS(im.forward_one(std::vector<std::uint8_t>(10, 0)), ShapeError);
  QuantTensor bad = pixels_to_quant(std::vector<std::uint8_t>(3 * 64, 0), {1, 3, 8, 8});
  bad.values.raw()[5] = 300;
  CHECK_THROWS_AS(im.forward(bad), ShapeError);
  QuantTensor small = pixels_to_quant(std::vector<std::uint8_t>(3 * 16, 0), {1, 3, 4, 4});
  CHECK_THROWS_AS(im.forward(small), ShapeError);
}

}  // TEST_SUITE
