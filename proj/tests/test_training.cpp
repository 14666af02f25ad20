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
#include <map>
#include <random>

#include "doctest.h"
#include "mognet/training.hpp"
#include "oracles.hpp"

using namespace mognet;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.n = 16;
  c.groups = 2;
  c.k = 3;
  c.stages = 2;
  c.class_count = 2;
  c.image_size = 8;
  return c;
}

Dataset tiny_data(int samples) {
  SyntheticSpec s;
  s.samples = samples;
  return make_synthetic(s);
}

double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.raw()[i] * b.raw()[i];
  return s;
}

std::vector<double> all_proxies(Model& m) {
  std::vector<double> out;
  for (auto* w : m.ternary_layers()) out.insert(out.end(), w->proxy.begin(), w->proxy.end());
  for (auto* w : m.binary_layers()) out.insert(out.end(), w->proxy.begin(), w->proxy.end());
  return out;
}

std::vector<double> all_bn(Model& m) {
  std::vector<double> out;
  for (auto* bn : m.bn_layers()) {
    for (const auto* v : {&bn->gamma, &bn->beta, &bn->moving_mean, &bn->moving_var}) {
      out.insert(out.end(), v->begin(), v->end());
    }
  }
  return out;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("adam: zero gradient leaves the parameter unchanged") {
  std::vector<double> p = {0.3, -0.7};
  const std::vector<double> g = {0.0, 0.0};
  AdamState s;
  for (int i = 0; i < 5; ++i) adaptive_moment_step(p, g, s, 1e-3, AdamParams{});
  CHECK(p == std::vector<double>{0.3, -0.7});
}

TEST_CASE("adam: first step moves by lr against the gradient sign") {
  // m1 = (1-b1) g, v1 = (1-b2) g^2; bias correction gives m^ = g, v^ = g^2,
  // so the step is lr * g / (|g| + eps).
  const double lr = 1e-3, eps = 1e-8;
  for (double g : {0.5, -2.0, 1e-3}) {
    std::vector<double> p = {0.1};
    AdamState s;
    adaptive_moment_step(p, std::vector<double>{g}, s, lr, AdamParams{0.9, 0.999, eps, false});
    CHECK(p[0] == doctest::Approx(0.1 - lr * g / (std::abs(g) + eps)).epsilon(1e-12));
  }
}

TEST_CASE("adam: constant gradient converges to lr-sized steps") {
  const double lr = 1e-3;
  std::vector<double> p = {0.0};
  AdamState s;
  double last = 0.0;
  for (int t = 0; t < 3000; ++t) {
    const double before = p[0];
    adaptive_moment_step(p, std::vector<double>{0.25}, s, lr, AdamParams{});
    last = p[0] - before;
  }
  CHECK(last == doctest::Approx(-lr).epsilon(1e-6));
  CHECK(s.step == 3000);
}

TEST_CASE("adam: clipping keeps proxies in [-1, 1]") {
  std::vector<double> p = {0.9995, -0.9995};
  AdamState s;
  adaptive_moment_step(p, std::vector<double>{-1.0, 1.0}, s, 1e-2, AdamParams{0.9, 0.999, 1e-8, true});
  CHECK(p[0] == 1.0);
  CHECK(p[1] == -1.0);
}

TEST_CASE("proxy gradient is zero outside the STE support") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> d(-1.5, 1.5);
  std::vector<double> w(500), g(500);
  for (auto& v : w) v = d(rng);
  for (auto& v : g) v = d(rng);
  w[0] = 1.0;
  w[1] = -1.0;
  const auto out = proxy_gradient(w, g);
  for (std::size_t i = 0; i < w.size(); ++i) CHECK(out[i] == (std::abs(w[i]) <= 1.0 ? g[i] : 0.0));
}

TEST_CASE("augmentation contracts") {
  std::mt19937_64 rng(2);
  std::vector<std::uint8_t> img(3 * 8 * 8);
  for (auto& v : img) v = static_cast<std::uint8_t>(rng() % 256);
  CHECK(hflip(hflip(img, 3, 8, 8), 3, 8, 8) == img);
  CHECK(pad_crop(img, 3, 8, 8, 4, 4) == img);

  auto histogram = [](const std::vector<std::uint8_t>& v) {
    std::map<int, int> h;
    for (auto x : v) ++h[x];
    return h;
  };
  CHECK(histogram(hflip(img, 3, 8, 8)) == histogram(img));

  // Offset (0, 0) shifts the image down-right by 4 and zero fills.
  const auto shifted = pad_crop(img, 3, 8, 8, 0, 0);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) {
        const std::uint8_t expect = (y >= 4 && x >= 4) ? img[(c * 8 + y - 4) * 8 + x - 4] : 0;
        CHECK(shifted[(c * 8 + y) * 8 + x] == expect);
      }

  std::vector<std::uint8_t> batch_a(2 * img.size()), batch_b;
  std::copy(img.begin(), img.end(), batch_a.begin());
  std::copy(img.begin(), img.end(), batch_a.begin() + img.size());
  batch_b = batch_a;
  std::mt19937_64 r1(9), r2(9);
  augment(batch_a, {2, 3, 8, 8}, AugmentConfig{}, r1);
  augment(batch_b, {2, 3, 8, 8}, AugmentConfig{}, r2);
  CHECK(batch_a == batch_b);
  std::vector<std::uint8_t> untouched = batch_b;
  augment(untouched, {2, 3, 8, 8}, AugmentConfig{false, false}, r1);
  CHECK(untouched == batch_b);
}

TEST_CASE("softmax cross-entropy value and gradient") {
  const Tensor logits({2, 3, 1, 1}, std::vector<double>{1.0, 2.0, 0.5, -1.0, 0.0, 3.0});
  const std::vector<int> labels = {1, 0};
  const LossResult r = softmax_cross_entropy(logits, labels);
  auto ce = [](double a, double b, double c, int y) {
    const double z[3] = {a, b, c};
    const double mx = std::max({a, b, c});
    double s = 0;
    for (double v : z) s += std::exp(v - mx);
    return -(z[y] - mx - std::log(s));
  };
  const double expect = 0.5 * (ce(1.0, 2.0, 0.5, 1) + ce(-1.0, 0.0, 3.0, 0));
  CHECK(r.loss == doctest::Approx(expect).epsilon(1e-12));
  CHECK(r.correct == 1);
  const double h = 1e-6;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    Tensor p = logits, m = logits;
    p.raw()[i] += h;
    m.raw()[i] -= h;
    const double fd = (softmax_cross_entropy(p, labels).loss - softmax_cross_entropy(m, labels).loss) / (2 * h);
    CHECK(r.grad_logits.raw()[i] == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("cflog backward is the adjoint of cflog forward") {
  std::mt19937_64 rng(3);
  Model model = build_model(tiny_config());
  const Cflog& layer = model.blocks[0].first;
  const Tensor x = oracle::random_tensor({2, 16, 4, 4}, rng);
  CflogCache cache;
  Mrb& blk = model.blocks[0];
  MrbCache mc;
  mrb_forward(x, blk, 3, ForwardOptions{ActivationMode::kFullPrecision, true}, &mc);
  cache = mc.c1;
  const Tensor y = cflog_forward(x, layer);
  const Tensor g = oracle::random_tensor(y.shape(), rng);
  CflogGrads grads;
  const Tensor gx = cflog_backward(g, layer, cache, grads);
  CHECK(dot(g, y) == doctest::Approx(dot(gx, x)).epsilon(1e-10));
  // Linear in each weight tensor too.
  CHECK(dot(g, y) == doctest::Approx(dot(grads.grouped, layer.grouped.real_weight())).epsilon(1e-10));
  CHECK(dot(g, y) == doctest::Approx(dot(grads.reduce, layer.reduce.real_weight())).epsilon(1e-10));
}

TEST_CASE("full-precision model backward matches finite differences on BN affine") {
  Model model = build_model(tiny_config());
  std::mt19937_64 rng(4);
  const Tensor images = oracle::random_tensor({4, 3, 8, 8}, rng, 0.0, 1.0);
  const std::vector<int> labels = {0, 1, 1, 0};
  const ForwardOptions opts{ActivationMode::kFullPrecision, true};
  auto loss_of = [&](Model m) {
    return softmax_cross_entropy(model_forward(m, images, opts), labels).loss;
  };
  Model probe = model;
  ModelCache cache;
  const LossResult r = softmax_cross_entropy(model_forward(probe, images, opts, &cache), labels);
  const ModelGrads g = model_backward(probe, cache, r.grad_logits, ActivationMode::kFullPrecision);
  const double h = 1e-6;
  for (int c = 0; c < 2; ++c) {
    Model p = model, m = model;
    p.head_bn.gamma[c] += h;
    m.head_bn.gamma[c] -= h;
    CHECK(g.head_bn.gamma[c] == doctest::Approx((loss_of(p) - loss_of(m)) / (2 * h)).epsilon(1e-4));
  }
  for (int c = 0; c < 16; c += 5) {
    Model p = model, m = model;
    p.blocks[1].bn2.beta[c] += h;
    m.blocks[1].bn2.beta[c] -= h;
    const double fd = (loss_of(p) - loss_of(m)) / (2 * h);
    CHECK(g.blocks[1].bn2.beta[c] == doctest::Approx(fd).epsilon(1e-4).scale(1e-6));
    p = model;
    m = model;
    p.stem_bn.gamma[c] += h;
    m.stem_bn.gamma[c] -= h;
    const double fs = (loss_of(p) - loss_of(m)) / (2 * h);
    CHECK(g.stem_bn.gamma[c] == doctest::Approx(fs).epsilon(1e-4).scale(1e-6));
  }
}

TEST_CASE("learning rate schedule") {
  TrainConfig cfg;
  CHECK(cfg.lr_at(1, 120) == 1e-3);
  CHECK(cfg.lr_at(120, 120) == 1e-3);
  CHECK(cfg.lr_at(121, 120) == doctest::Approx(0.9e-3).epsilon(1e-15));
  CHECK(cfg.lr_at(123, 120) == doctest::Approx(1e-3 * 0.729).epsilon(1e-14));
  cfg.lr_decay_rate = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("zero learning rate: proxies frozen, step sizes from tertiles") {
  Model model = build_model(tiny_config());
  const std::vector<double> before = all_proxies(model);
  TrainConfig cfg;
  cfg.lr = 0.0;
  const auto history = train_btq(model, tiny_data(10), cfg, ActivationMode::kQuantized, 2, 1, 0);
  REQUIRE(history.size() == 1);
  CHECK(all_proxies(model) == before);
  std::size_t i = 0;
  for (auto* w : model.ternary_layers()) {
    CHECK(w->spec.step == oracle::ternary_step(w->proxy));
    CHECK(history[0].steps[i] == w->spec.step);
    CHECK(history[0].step_updated[i] == 1);
    ++i;
  }
}

TEST_CASE("forward is pure and training is deterministic") {
  const Dataset data = tiny_data(60);
  Model a = build_model(tiny_config());
  std::mt19937_64 rng(5);
  const Tensor batch = oracle::random_tensor({5, 3, 8, 8}, rng, 0.0, 1.0);
  const std::vector<int> labels = {0, 1, 0, 1, 1};
  const double l1 = softmax_cross_entropy(model_forward(a, batch), labels).loss;
  const double l2 = softmax_cross_entropy(model_forward(a, batch), labels).loss;
  CHECK(l1 == l2);

  TrainConfig cfg;
  cfg.epochs_stage1 = 2;
  cfg.epochs_stage2 = 2;
  cfg.batch_size = 20;
  Model b = build_model(tiny_config());
  two_stage_train(a, data, cfg);
  two_stage_train(b, data, cfg);
  CHECK(all_proxies(a) == all_proxies(b));
  CHECK(all_bn(a) == all_bn(b));
  for (std::size_t i = 0; i < a.ternary_layers().size(); ++i) {
    CHECK(a.ternary_layers()[i]->codes == b.ternary_layers()[i]->codes);
  }
  cfg.rng_seed = 99;
  Model c = build_model(tiny_config());
  two_stage_train(c, data, cfg);
  CHECK(all_proxies(c) != all_proxies(a));
}

TEST_CASE("metrics: one entry per epoch per stage") {
  TrainConfig cfg;
  cfg.epochs_stage1 = 2;
  cfg.epochs_stage2 = 3;
  cfg.batch_size = 25;
  Model model = build_model(tiny_config());
  std::vector<std::string> lines;
  const auto history = two_stage_train(model, tiny_data(50), cfg, [&](const EpochMetrics& m) {
    lines.push_back(m.to_line());
  });
  REQUIRE(history.size() == 5);
  REQUIRE(lines.size() == 5);
  CHECK(lines[0].rfind("stage=1 epoch=1 ", 0) == 0);
  CHECK(lines[1].rfind("stage=1 epoch=2 ", 0) == 0);
  CHECK(lines[2].rfind("stage=2 epoch=1 ", 0) == 0);
  CHECK(lines[4].rfind("stage=2 epoch=3 ", 0) == 0);
  for (const auto& l : lines) {
    CHECK(l.find(" loss=") != std::string::npos);
    CHECK(l.find(" lr=") != std::string::npos);
    CHECK(l.find(" s0=") != std::string::npos);
    CHECK(l.find(" select_rate=") != std::string::npos);
  }
  for (const auto& m : history) {
    CHECK(m.select_rate >= 0.0);
    CHECK(m.select_rate <= 1.0);
  }
}

TEST_CASE("stage swap changes activations only") {
  TrainConfig cfg;
  cfg.batch_size = 25;
  Model model = build_model(tiny_config());
  const Dataset data = tiny_data(50);
  train_btq(model, data, cfg, ActivationMode::kFullPrecision, 1, 2, 0);
  const std::vector<double> proxies = all_proxies(model);
  std::vector<std::vector<std::int8_t>> codes;
  for (auto* w : model.ternary_layers()) codes.push_back(w->codes);
  // Zero learning rate isolates the swap: the stage-2 prologue rederives the
  // same step sizes from the same proxies.
  cfg.lr = 0.0;
  train_btq(model, data, cfg, ActivationMode::kQuantized, 2, 1, 0);
  CHECK(all_proxies(model) == proxies);
  std::size_t i = 0;
  for (auto* w : model.ternary_layers()) CHECK(w->codes == codes[i++]);
}

TEST_CASE("quantized weights stay in their codebooks during training") {
  TrainConfig cfg;
  cfg.batch_size = 10;
  Model model = build_model(tiny_config());
  train_btq(model, tiny_data(30), cfg, ActivationMode::kQuantized, 2, 2, 0,
            [&](const EpochMetrics&) {
              for (auto* w : model.ternary_layers())
                for (auto v : w->codes) CHECK((v >= -1 && v <= 1));
              for (auto* w : model.binary_layers())
                for (auto v : w->codes) CHECK((v == -1 || v == 1));
            });
}

TEST_CASE("divergence guard and input checks") {
  TrainConfig cfg;
  Model model = build_model(tiny_config());
  model.head_bn.gamma[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(train_btq(model, tiny_data(10), cfg, ActivationMode::kQuantized, 2, 1, 0), InternalError);
  Model ok = build_model(tiny_config());
  CHECK_THROWS_AS(train_btq(ok, Dataset{}, cfg, ActivationMode::kQuantized, 2, 1, 0), DataError);
  SyntheticSpec wrong;
  wrong.image_size = 16;
  CHECK_THROWS_AS(train_btq(ok, make_synthetic(wrong), cfg, ActivationMode::kQuantized, 2, 1, 0), DataError);
}

TEST_CASE("synthetic set is balanced and deterministic") {
  const Dataset a = tiny_data(100);
  const Dataset b = tiny_data(100);
  CHECK(a.pixels == b.pixels);
  CHECK(a.labels == b.labels);
  int ones = 0;
  for (int l : a.labels) ones += l;
  CHECK(ones == 50);
  CHECK(a.image_bytes() == 3 * 8 * 8);
}

TEST_CASE("stage-2-only training from random init" * doctest::timeout(300)) {
  // Robustness check: quantized activations from the start.
  TrainConfig cfg;
  cfg.epochs_stage1 = 0;
  cfg.epochs_stage2 = 15;
  cfg.decay_start_stage2 = 10;
  Model model = build_model(tiny_config());
  const Dataset data = tiny_data(1000);
  two_stage_train(model, data, cfg);
  const double acc = accuracy(model, data);
  MESSAGE("stage-2-only train accuracy " << acc);
  CHECK(acc >= 0.85);
}

}  // TEST_SUITE
