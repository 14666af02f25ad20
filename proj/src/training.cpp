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

#include "mognet/training.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <numeric>
#include <sstream>

namespace mognet {

namespace {

void require(bool ok, const std::string& field, const std::string& why) {
  if (!ok) throw ConfigError("invalid " + field + ": " + why);
}

Tensor activation_backward(const Tensor& grad, const Tensor& z, ActivationMode mode) {
  Tensor out(grad.shape());
  auto g = grad.values();
  auto zs = z.values();
  auto d = out.values();
  if (mode == ActivationMode::kQuantized) {
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = std::abs(zs[i]) <= 1.0 ? g[i] : 0.0;
  } else {
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = zs[i] > 0.0 ? g[i] : 0.0;
  }
  return out;
}

BnParamGrads bn_backward(Tensor& grad, const BnCache& cache, const BNParams& p) {
  BnGrads g = batch_norm_backward(grad, cache, p);
  grad = std::move(g.input);
  return {std::move(g.gamma), std::move(g.beta)};
}

void add_into(Tensor& dst, const Tensor& src) {
  auto d = dst.values();
  auto s = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

// Parameter tensor paired with its gradient, in a fixed model order.
struct Slot {
  std::span<double> param;
  std::span<const double> grad;
  bool quantized;
};

template <typename Fn>
void for_each_slot(Model& model, const ModelGrads& g, Fn&& fn) {
  auto bn = [&fn](BNParams& p, const BnParamGrads& pg) {
    fn(Slot{p.gamma, pg.gamma, false});
    fn(Slot{p.beta, pg.beta, false});
  };
  fn(Slot{model.stem.proxy, g.stem.values(), true});
  bn(model.stem_bn, g.stem_bn);
  for (std::size_t i = 0; i < model.blocks.size(); ++i) {
    Mrb& b = model.blocks[i];
    const MrbGrads& bg = g.blocks[i];
    fn(Slot{b.first.reduce.proxy, bg.first.reduce.values(), true});
    fn(Slot{b.first.grouped.proxy, bg.first.grouped.values(), true});
    bn(b.bn1, bg.bn1);
    fn(Slot{b.second.reduce.proxy, bg.second.reduce.values(), true});
    fn(Slot{b.second.grouped.proxy, bg.second.grouped.values(), true});
    bn(b.bn2, bg.bn2);
  }
  fn(Slot{model.head.proxy, g.head.values(), true});
  bn(model.head_bn, g.head_bn);
}

void requantize_all(Model& model) {
  for (QuantWeight* w : model.ternary_layers()) w->requantize();
  for (QuantWeight* w : model.binary_layers()) w->requantize();
}

[[maybe_unused]] bool codes_valid(Model& model) {
  for (QuantWeight* w : model.ternary_layers()) {
    for (std::int8_t c : w->codes) {
      if (c < -1 || c > 1) return false;
    }
  }
  for (QuantWeight* w : model.binary_layers()) {
    for (std::int8_t c : w->codes) {
      if (c != -1 && c != 1) return false;
    }
  }
  return true;
}

}  // namespace

// ---- configuration ----------------------------------------------------------

void TrainConfig::validate() const {
  require(epochs_stage1 >= 0 && epochs_stage2 >= 0 && epochs_stage1 + epochs_stage2 > 0,
          "epochs_stage1/epochs_stage2", "need a non-negative count and at least one epoch total");
  require(decay_start_stage1 >= 0 && decay_start_stage2 >= 0, "decay_start", "must be >= 0");
  require(batch_size >= 1, "batch_size", "must be positive");
  require(lr >= 0.0 && std::isfinite(lr), "lr", "must be finite and >= 0");
  require(lr_decay_rate > 0.0 && lr_decay_rate <= 1.0, "lr_decay_rate", "must be in (0, 1]");
  require(beta1 >= 0.0 && beta1 < 1.0, "beta1", "must be in [0, 1)");
  require(beta2 >= 0.0 && beta2 < 1.0, "beta2", "must be in [0, 1)");
  require(adam_epsilon > 0.0, "adam_epsilon", "must be positive");
}

double TrainConfig::lr_at(int epoch, int decay_start) const {
  double rate = lr;
  for (int e = decay_start + 1; e <= epoch; ++e) rate *= lr_decay_rate;
  return rate;
}

void adaptive_moment_step(std::span<double> param, std::span<const double> grad, AdamState& state,
                          double lr, const AdamParams& p) {
  if (param.size() != grad.size()) throw ShapeError("adam: parameter/gradient size mismatch");
  if (state.m.size() != param.size()) {
    state.m.assign(param.size(), 0.0);
    state.v.assign(param.size(), 0.0);
    state.step = 0;
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(p.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(p.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    state.m[i] = p.beta1 * state.m[i] + (1.0 - p.beta1) * grad[i];
    state.v[i] = p.beta2 * state.v[i] + (1.0 - p.beta2) * grad[i] * grad[i];
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    param[i] -= lr * m_hat / (std::sqrt(v_hat) + p.epsilon);
    if (p.clip) param[i] = std::clamp(param[i], -1.0, 1.0);
  }
}

std::vector<double> proxy_gradient(std::span<const double> proxy, std::span<const double> grad_q) {
  if (proxy.size() != grad_q.size()) throw ShapeError("proxy/gradient size mismatch");
  const SteMask mask = weight_ste_mask(proxy);
  std::vector<double> g(proxy.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = mask[i] ? grad_q[i] : 0.0;
  return g;
}

// ---- augmentation -----------------------------------------------------------

std::vector<std::uint8_t> pad_crop(std::span<const std::uint8_t> image, int channels, int height,
                                   int width, int oy, int ox) {
  constexpr int kPad = 4;
  if (oy < 0 || oy > 2 * kPad || ox < 0 || ox > 2 * kPad) throw ConfigError("crop offset out of range");
  std::vector<std::uint8_t> out(image.size(), 0);
  for (int c = 0; c < channels; ++c) {
    for (int y = 0; y < height; ++y) {
      const int sy = y + oy - kPad;
      if (sy < 0 || sy >= height) continue;
      for (int x = 0; x < width; ++x) {
        const int sx = x + ox - kPad;
        if (sx < 0 || sx >= width) continue;
        out[(c * height + y) * width + x] = image[(c * height + sy) * width + sx];
      }
    }
  }
  return out;
}

std::vector<std::uint8_t> hflip(std::span<const std::uint8_t> image, int channels, int height,
                                int width) {
  std::vector<std::uint8_t> out(image.size());
  for (int c = 0; c < channels; ++c) {
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        out[(c * height + y) * width + x] = image[(c * height + y) * width + (width - 1 - x)];
      }
    }
  }
  return out;
}

void augment(std::vector<std::uint8_t>& batch, const Shape4& shape, const AugmentConfig& cfg,
             std::mt19937_64& rng) {
  if (batch.size() != shape.size()) throw ShapeError("augment: batch does not match shape");
  if (!cfg.pad_crop && !cfg.hflip) return;
  if (shape.h < 8 || shape.w < 8) throw ConfigError("augmentation needs images of at least 8x8");
  const std::size_t bytes = static_cast<std::size_t>(shape.c) * shape.h * shape.w;
  for (int i = 0; i < shape.n; ++i) {
    std::span<std::uint8_t> img(batch.data() + i * bytes, bytes);
    std::vector<std::uint8_t> cur(img.begin(), img.end());
    if (cfg.pad_crop) {
      const int oy = static_cast<int>(rng() % 9);
      const int ox = static_cast<int>(rng() % 9);
      cur = pad_crop(cur, shape.c, shape.h, shape.w, oy, ox);
    }
    if (cfg.hflip && (rng() & 1u)) cur = hflip(cur, shape.c, shape.h, shape.w);
    std::copy(cur.begin(), cur.end(), img.begin());
  }
}

// ---- forward/backward -------------------------------------------------------

LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  const int n = logits.n();
  const int classes = logits.c();
  if (static_cast<int>(labels.size()) != n) throw ShapeError("labels/logits batch mismatch");
  LossResult r;
  r.grad_logits = Tensor(logits.shape());
  for (int b = 0; b < n; ++b) {
    double peak = logits.at(b, 0, 0, 0);
    int arg = 0;
    for (int c = 1; c < classes; ++c) {
      if (logits.at(b, c, 0, 0) > peak) {
        peak = logits.at(b, c, 0, 0);
        arg = c;
      }
    }
    double denom = 0.0;
    for (int c = 0; c < classes; ++c) denom += std::exp(logits.at(b, c, 0, 0) - peak);
    const int y = labels[b];
    if (y < 0 || y >= classes) throw DataError("label out of range");
    r.loss += -(logits.at(b, y, 0, 0) - peak - std::log(denom));
    r.correct += arg == y;
    for (int c = 0; c < classes; ++c) {
      const double p = std::exp(logits.at(b, c, 0, 0) - peak) / denom;
      r.grad_logits.at(b, c, 0, 0) = (p - (c == y ? 1.0 : 0.0)) / n;
    }
  }
  r.loss /= n;
  return r;
}

Tensor cflog_backward(const Tensor& grad_out, const Cflog& layer, const CflogCache& cache,
                      CflogGrads& grads) {
  const Tensor expand = layer.expand_weight();
  const Tensor grouped = layer.grouped.real_weight();
  const Tensor reduce = layer.reduce.real_weight();
  Tensor d_grouped = conv2d_backward_input(grad_out, expand, 1, Padding::kSame, 1,
                                           cache.grouped.shape());
  grads.grouped = conv2d_backward_weight(cache.reduced, d_grouped, grouped.shape(),
                                         layer.cfg.groups, Padding::kSame, 1);
  Tensor d_reduced = conv2d_backward_input(d_grouped, grouped, layer.cfg.groups, Padding::kSame, 1,
                                           cache.reduced.shape());
  grads.reduce = conv2d_backward_weight(cache.input, d_reduced, reduce.shape(), 1, Padding::kSame, 1);
  return conv2d_backward_input(d_reduced, reduce, 1, Padding::kSame, 1, cache.input.shape());
}

Tensor mrb_backward(const Tensor& grad_out, const Mrb& block, const MrbCache& cache,
                    ActivationMode mode, MrbGrads& grads) {
  // The residual rescale passes gradients straight through when quantized
  // and halves them in its linear full-precision form.
  const double rescale = mode == ActivationMode::kQuantized ? 1.0 : 0.5;
  const Shape4 shape = grad_out.shape();
  const std::size_t hw = static_cast<std::size_t>(shape.h) * shape.w;
  Tensor d_i1(shape);
  Tensor d_skip(shape);
  for (int b = 0; b < shape.n; ++b) {
    for (int c = 0; c < shape.c; ++c) {
      const bool selected = cache.select[static_cast<std::size_t>(b) * shape.c + c];
      const double* g = grad_out.plane(b, c);
      double* di = d_i1.plane(b, c);
      double* ds = d_skip.plane(b, c);
      for (std::size_t i = 0; i < hw; ++i) {
        di[i] = selected ? g[i] : rescale * g[i];
        ds[i] = selected ? 0.0 : rescale * g[i];
      }
    }
  }
  Tensor d = activation_backward(d_i1, cache.z2, mode);
  grads.bn2 = bn_backward(d, cache.bn2, block.bn2);
  Tensor d_h1 = cflog_backward(d, block.second, cache.c2, grads.second);
  d = activation_backward(d_h1, cache.z1, mode);
  grads.bn1 = bn_backward(d, cache.bn1, block.bn1);
  Tensor dx = cflog_backward(d, block.first, cache.c1, grads.first);
  add_into(dx, d_skip);
  return dx;
}

ModelGrads model_backward(const Model& model, const ModelCache& cache, const Tensor& grad_logits,
                          ActivationMode mode) {
  const ModelConfig& cfg = model.cfg;
  ModelGrads g;
  g.blocks.resize(model.blocks.size());

  Tensor d = global_avg_pool_backward(grad_logits, cache.head_z.shape());
  g.head_bn = bn_backward(d, cache.head_bn, model.head_bn);
  const Tensor head_w = model.head.real_weight();
  g.head = conv2d_backward_weight(cache.head_input, d, head_w.shape(), 1, Padding::kSame, 1);
  d = conv2d_backward_input(d, head_w, 1, Padding::kSame, 1, cache.head_input.shape());

  int idx = static_cast<int>(model.blocks.size());
  for (int s = cfg.stages - 1; s >= 0; --s) {
    d = maxpool2x2_backward(cache.pool_inputs[s], d);
    for (int j = 0; j < cfg.blocks_per_stage; ++j) {
      --idx;
      d = mrb_backward(d, model.blocks[idx], cache.blocks[idx], mode, g.blocks[idx]);
    }
  }

  d = activation_backward(d, cache.stem_z, mode);
  g.stem_bn = bn_backward(d, cache.stem_bn, model.stem_bn);
  g.stem = conv2d_backward_weight(cache.input, d, model.stem.shape, 1, Padding::kSame, 1);
  return g;
}

// ---- training loop ----------------------------------------------------------

std::string EpochMetrics::to_line() const {
  std::ostringstream os;
  char buf[64];
  os << "stage=" << stage << " epoch=" << epoch;
  std::snprintf(buf, sizeof buf, " loss=%.6f", loss);
  os << buf;
  std::snprintf(buf, sizeof buf, " accuracy=%.4f", accuracy);
  os << buf;
  std::snprintf(buf, sizeof buf, " lr=%.6g", lr);
  os << buf;
  std::snprintf(buf, sizeof buf, " select_rate=%.4f", select_rate);
  os << buf;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    std::snprintf(buf, sizeof buf, " s%zu=%.6g", i, steps[i]);
    os << buf;
  }
  return os.str();
}

std::vector<std::uint8_t> refresh_step_sizes(Model& model) {
  std::vector<std::uint8_t> ok;
  for (QuantWeight* w : model.ternary_layers()) {
    if (!w->has_proxy()) {
      ok.push_back(0);
      continue;
    }
    const bool updated = w->spec.refresh(w->proxy);
    if (!updated) {
      std::cerr << "warning: degenerate proxy distribution, keeping step size " << w->spec.step
                << '\n';
    }
    ok.push_back(updated);
    w->requantize();
  }
  return ok;
}

std::vector<EpochMetrics> train_btq(Model& model, const Dataset& data, const TrainConfig& cfg,
                                    ActivationMode mode, int stage, int epochs, int decay_start,
                                    const EpochCallback& on_epoch) {
  cfg.validate();
  if (data.size() == 0) throw DataError("training set is empty");
  if (data.channels != model.cfg.in_channels || data.height != model.cfg.image_size ||
      data.width != model.cfg.image_size) {
    throw DataError("dataset geometry does not match the model input");
  }
  for (QuantWeight* w : model.ternary_layers()) {
    if (!w->has_proxy()) throw ConfigError("model has no proxy weights (imported checkpoint?)");
  }

  std::mt19937_64 rng(cfg.rng_seed ^ (0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(stage)));
  const AdamParams weight_opt{cfg.beta1, cfg.beta2, cfg.adam_epsilon, cfg.clip_proxies};
  const AdamParams affine_opt{cfg.beta1, cfg.beta2, cfg.adam_epsilon, false};
  std::vector<AdamState> states;
  const ForwardOptions opts{mode, true};
  const Shape4 image{1, data.channels, data.height, data.width};

  std::vector<std::size_t> order(data.size());
  std::vector<EpochMetrics> history;
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    EpochMetrics em;
    em.stage = stage;
    em.epoch = epoch;
    em.lr = cfg.lr_at(epoch, decay_start);
    em.step_updated = refresh_step_sizes(model);
    for (QuantWeight* w : model.ternary_layers()) em.steps.push_back(w->spec.step);
    requantize_all(model);

    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size() - 1; i > 0; --i) {
      std::swap(order[i], order[rng() % (i + 1)]);
    }

    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::size_t selected = 0;
    std::size_t controls = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::vector<std::size_t> idx(order.begin() + start, order.begin() + end);
      const Shape4 shape{static_cast<int>(idx.size()), image.c, image.h, image.w};
      std::vector<std::uint8_t> bytes = data.gather(idx);
      augment(bytes, shape, cfg.augment, rng);
      std::vector<int> labels;
      labels.reserve(idx.size());
      for (std::size_t i : idx) labels.push_back(data.labels[i]);

      assert(codes_valid(model));
      ModelCache cache;
      const Tensor logits = model_forward(model, images_to_tensor(bytes, shape), opts, &cache);
      const LossResult lr = softmax_cross_entropy(logits, labels);
      if (!std::isfinite(lr.loss)) {
        throw InternalError("non-finite loss at stage " + std::to_string(stage) + " epoch " +
                            std::to_string(epoch) + " batch starting at " + std::to_string(start));
      }
      loss_sum += lr.loss * static_cast<double>(idx.size());
      correct += lr.correct;
      for (const MrbCache& bc : cache.blocks) {
        selected += static_cast<std::size_t>(std::count(bc.select.begin(), bc.select.end(), 1));
        controls += bc.select.size();
      }

      const ModelGrads grads = model_backward(model, cache, lr.grad_logits, mode);
      std::size_t slot = 0;
      for_each_slot(model, grads, [&](const Slot& s) {
        if (states.size() <= slot) states.emplace_back();
        if (s.quantized) {
          const std::vector<double> g = proxy_gradient(s.param, s.grad);
          adaptive_moment_step(s.param, g, states[slot], em.lr, weight_opt);
        } else {
          adaptive_moment_step(s.param, s.grad, states[slot], em.lr, affine_opt);
        }
        ++slot;
      });
      requantize_all(model);
    }
    em.loss = loss_sum / static_cast<double>(data.size());
    em.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
    if (controls > 0) em.select_rate = static_cast<double>(selected) / static_cast<double>(controls);
    history.push_back(em);
    if (on_epoch) on_epoch(em);
  }
  return history;
}

std::vector<EpochMetrics> two_stage_train(Model& model, const Dataset& data,
                                          const TrainConfig& cfg, const EpochCallback& on_epoch) {
  std::vector<EpochMetrics> all;
  if (cfg.epochs_stage1 > 0) {
    all = train_btq(model, data, cfg, ActivationMode::kFullPrecision, 1, cfg.epochs_stage1,
                    cfg.decay_start_stage1, on_epoch);
  }
  if (cfg.epochs_stage2 > 0) {
    auto second = train_btq(model, data, cfg, ActivationMode::kQuantized, 2, cfg.epochs_stage2,
                            cfg.decay_start_stage2, on_epoch);
    all.insert(all.end(), second.begin(), second.end());
  }
  model.freeze();
  return all;
}

void calibrate_bn(Model& model, const Tensor& images, ActivationMode mode) {
  std::vector<double> saved;
  for (BNParams* bn : model.bn_layers()) {
    saved.push_back(bn->momentum);
    bn->momentum = 0.0;
  }
  model_forward(model, images, ForwardOptions{mode, true});
  std::size_t i = 0;
  for (BNParams* bn : model.bn_layers()) bn->momentum = saved[i++];
}

std::vector<int> predict(const Model& model, const Dataset& data, int batch_size) {
  std::vector<int> out;
  out.reserve(data.size());
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t end = std::min(data.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<std::size_t> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Shape4 shape{static_cast<int>(idx.size()), data.channels, data.height, data.width};
    const Tensor logits = model_forward(model, images_to_tensor(data.gather(idx), shape));
    for (int b = 0; b < logits.n(); ++b) {
      int arg = 0;
      for (int c = 1; c < logits.c(); ++c) {
        if (logits.at(b, c, 0, 0) > logits.at(b, arg, 0, 0)) arg = c;
      }
      out.push_back(arg);
    }
  }
  return out;
}

double accuracy(const Model& model, const Dataset& data) {
  if (data.size() == 0) throw DataError("evaluation set is empty");
  const std::vector<int> pred = predict(model, data);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == data.labels[i];
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

}  // namespace mognet
