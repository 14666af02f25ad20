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

#include "mognet/blocks.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace mognet {

namespace {

void require(bool ok, const std::string& field, const std::string& why) {
  if (!ok) throw ConfigError("invalid " + field + ": " + why);
}

double uniform_pm1(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-52 - 1.0;
}

void fill_proxy(QuantWeight& w, std::mt19937_64& rng) {
  w.proxy.resize(w.shape.size());
  for (double& v : w.proxy) v = uniform_pm1(rng);
  if (w.kind == WeightKind::kTernary) w.spec.refresh(w.proxy);
  w.requantize();
}

Tensor activation(const Tensor& z, ActivationMode mode, int k) {
  Tensor out(z.shape());
  auto src = z.values();
  auto dst = out.values();
  if (mode == ActivationMode::kQuantized) {
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = qrelu(src[i], k);
  } else {
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > 0.0 ? src[i] : 0.0;
  }
  return out;
}

Tensor cflog_forward_impl(const Tensor& x, const Cflog& layer, CflogCache* cache) {
  if (x.c() != layer.cfg.c_in) {
    throw ShapeError("cflog expects " + std::to_string(layer.cfg.c_in) + " channels, got " +
                     std::to_string(x.c()));
  }
  Tensor reduced = conv2d<double>(x, layer.reduce.real_weight(), 1, Padding::kSame);
  Tensor grouped = conv2d<double>(reduced, layer.grouped.real_weight(), layer.cfg.groups,
                                  Padding::kSame);
  Tensor out = conv2d<double>(grouped, layer.expand_weight(), 1, Padding::kSame);
  if (cache != nullptr) {
    cache->input = x;
    cache->reduced = std::move(reduced);
    cache->grouped = std::move(grouped);
  }
  return out;
}

}  // namespace

// ---- configuration ----------------------------------------------------------

void ModelConfig::validate() const {
  require(n >= 4 && n % 2 == 0, "n", "must be an even number >= 4");
  require(groups >= 1, "groups", "must be positive");
  require(latent() % groups == 0, "groups", "must divide the latent width n/2");
  require(k >= 1 && k <= 8, "k", "activation bitwidth must be in [1,8]");
  require(stages >= 1, "stages", "must be positive");
  require(blocks_per_stage >= 1, "blocks_per_stage", "must be positive");
  require(class_count >= 2, "class_count", "need at least two classes");
  require(in_channels >= 1, "in_channels", "must be positive");
  require(image_size >= 2, "image_size", "must be at least 2");
  require(stages < 31 && image_size % (1 << stages) == 0, "image_size",
          "must be divisible by 2^stages");
  require(ca_rule >= 0 && ca_rule <= 255, "ca_rule", "must be in [0,255]");
  require(worst_case_accumulator(*this) <= std::numeric_limits<std::int32_t>::max(), "n",
          "worst-case accumulator exceeds 32 bits for this n/groups/k");
}

std::int64_t worst_case_accumulator(const ModelConfig& cfg) {
  const std::int64_t top = (std::int64_t{1} << std::min(cfg.k, 30)) - 1;
  const std::int64_t m = cfg.latent();
  const std::int64_t g = std::max(cfg.groups, 1);
  const std::int64_t stem = std::int64_t{cfg.in_channels} * 9 * 255;
  const std::int64_t reduce = std::int64_t{cfg.n} * top;
  const std::int64_t grouped = 9 * (m / g) * reduce;
  const std::int64_t expand = m * grouped;
  const std::int64_t head = std::int64_t{cfg.n} * top;
  const std::int64_t pooled = std::int64_t{cfg.image_size} * cfg.image_size * top * 2;
  return std::max({stem, reduce, grouped, expand, head, pooled});
}

void CflogConfig::validate() const {
  require(c_in > 0 && c_out > 0, "cflog channels", "must be positive");
  require(latent > 0 && latent <= c_in, "cflog latent", "must be in [1, c_in]");
  require(groups > 0 && latent % groups == 0, "cflog groups", "must divide the latent width");
  require(ca.width == c_out, "cflog ca.width", "must equal c_out");
  require(ca.steps == latent, "cflog ca.steps", "must equal the latent width");
  ca.validate();
}

// ---- weights ----------------------------------------------------------------

void QuantWeight::requantize() {
  if (!has_proxy()) return;
  codes.resize(proxy.size());
  if (kind == WeightKind::kTernary) {
    for (std::size_t i = 0; i < proxy.size(); ++i) codes[i] = ternary(proxy[i], spec.step);
  } else {
    for (std::size_t i = 0; i < proxy.size(); ++i) codes[i] = binary(proxy[i]);
  }
}

Tensor QuantWeight::real_weight() const {
  Tensor w(shape);
  auto dst = w.values();
  for (std::size_t i = 0; i < codes.size(); ++i) dst[i] = codes[i];
  return w;
}

Cflog::Cflog(CflogConfig config)
    : cfg(std::move(config)),
      reduce(WeightKind::kBinary, {cfg.latent, cfg.c_in, 1, 1}),
      grouped(WeightKind::kTernary, {cfg.latent, cfg.latent / std::max(cfg.groups, 1), 3, 3}) {
  cfg.validate();
  expand = generate_kernel(cfg.ca);
}

Tensor Cflog::expand_weight() const {
  Tensor w({expand.width(), expand.steps(), 1, 1});
  for (int o = 0; o < expand.width(); ++o) {
    for (int t = 0; t < expand.steps(); ++t) w.at(o, t, 0, 0) = expand.mapped(o, t);
  }
  return w;
}

std::vector<QuantWeight*> Model::ternary_layers() {
  std::vector<QuantWeight*> out{&stem};
  for (Mrb& b : blocks) {
    out.push_back(&b.first.grouped);
    out.push_back(&b.second.grouped);
  }
  return out;
}

std::vector<QuantWeight*> Model::binary_layers() {
  std::vector<QuantWeight*> out;
  for (Mrb& b : blocks) {
    out.push_back(&b.first.reduce);
    out.push_back(&b.second.reduce);
  }
  out.push_back(&head);
  return out;
}

std::vector<BNParams*> Model::bn_layers() {
  std::vector<BNParams*> out{&stem_bn};
  for (Mrb& b : blocks) {
    out.push_back(&b.bn1);
    out.push_back(&b.bn2);
  }
  out.push_back(&head_bn);
  return out;
}

std::vector<const BNParams*> Model::bn_layers() const {
  std::vector<const BNParams*> out{&stem_bn};
  for (const Mrb& b : blocks) {
    out.push_back(&b.bn1);
    out.push_back(&b.bn2);
  }
  out.push_back(&head_bn);
  return out;
}

void Model::freeze() {
  for (BNParams* bn : bn_layers()) bn->round_to_float();
}

Model build_model(const ModelConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.master_seed);
  const int n = cfg.n;
  const int m = cfg.latent();

  Model model;
  model.cfg = cfg;
  model.stem = QuantWeight(WeightKind::kTernary, {n, cfg.in_channels, 3, 3});
  fill_proxy(model.stem, rng);
  model.stem_bn = BNParams(n);

  BitRow shared_seed;
  if (cfg.shared_ca_seed) shared_seed = default_seed(n, rng());
  auto make_cflog = [&] {
    CAConfig ca{cfg.ca_rule, n, m, cfg.shared_ca_seed ? shared_seed : default_seed(n, rng())};
    Cflog layer(CflogConfig{n, n, m, cfg.groups, std::move(ca)});
    fill_proxy(layer.reduce, rng);
    fill_proxy(layer.grouped, rng);
    return layer;
  };
  const int total_blocks = cfg.stages * cfg.blocks_per_stage;
  model.blocks.reserve(total_blocks);
  for (int i = 0; i < total_blocks; ++i) {
    Cflog first = make_cflog();
    Cflog second = make_cflog();
    model.blocks.push_back(Mrb{std::move(first), BNParams(n), std::move(second), BNParams(n)});
  }
  model.head = QuantWeight(WeightKind::kBinary, {cfg.class_count, n, 1, 1});
  fill_proxy(model.head, rng);
  model.head_bn = BNParams(cfg.class_count);
  return model;
}

// ---- block operations -------------------------------------------------------

Tensor cflog_forward(const Tensor& x, const Cflog& layer) {
  return cflog_forward_impl(x, layer, nullptr);
}

std::vector<std::uint8_t> tgap(const Tensor& x, double tgap_max) {
  if (!(tgap_max > 0.0)) throw ConfigError("tgap_max must be positive");
  const Tensor mean = global_avg_pool(x);
  std::vector<std::uint8_t> s(mean.size());
  auto m = mean.values();
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = m[i] > 0.5 * tgap_max;
  return s;
}

std::vector<std::uint8_t> tgap_codewords(const Tensor& x, int k) {
  const std::int64_t top = max_level(k);
  const std::int64_t hw = std::int64_t{x.h()} * x.w();
  std::vector<std::uint8_t> s(static_cast<std::size_t>(x.n()) * x.c());
  for (int b = 0; b < x.n(); ++b) {
    for (int c = 0; c < x.c(); ++c) {
      const double* p = x.plane(b, c);
      std::int64_t sum = 0;
      for (std::int64_t i = 0; i < hw; ++i) sum += std::llround(p[i] * static_cast<double>(top));
      s[static_cast<std::size_t>(b) * x.c() + c] = 2 * sum > top * hw;
    }
  }
  return s;
}

std::vector<std::uint8_t> tgap_full_precision(const Tensor& x) {
  const Tensor mean = global_avg_pool(x);
  std::vector<std::uint8_t> s(mean.size(), 0);
  for (int b = 0; b < x.n(); ++b) {
    double peak = 0.0;
    for (int c = 0; c < x.c(); ++c) peak = std::max(peak, mean.at(b, c, 0, 0));
    for (int c = 0; c < x.c(); ++c) {
      s[static_cast<std::size_t>(b) * x.c() + c] = mean.at(b, c, 0, 0) > 0.5 * peak;
    }
  }
  return s;
}

Tensor mux(const Tensor& i0, const Tensor& i1, const std::vector<std::uint8_t>& s) {
  if (!(i0.shape() == i1.shape())) throw ShapeError("mux inputs differ in shape");
  if (s.size() != static_cast<std::size_t>(i0.n()) * i0.c()) {
    throw ShapeError("mux select signal has wrong length");
  }
  Tensor out(i0.shape());
  const std::size_t hw = static_cast<std::size_t>(i0.h()) * i0.w();
  for (int b = 0; b < i0.n(); ++b) {
    for (int c = 0; c < i0.c(); ++c) {
      const Tensor& src = s[static_cast<std::size_t>(b) * i0.c() + c] ? i1 : i0;
      std::copy_n(src.plane(b, c), hw, out.plane(b, c));
    }
  }
  return out;
}

MrbOutputs mrb_forward(const Tensor& x, Mrb& block, int k, const ForwardOptions& opts,
                       MrbCache* cache) {
  const bool quantized = opts.activation == ActivationMode::kQuantized;
  MrbOutputs o;
  Tensor a = cflog_forward_impl(x, block.first, cache ? &cache->c1 : nullptr);
  Tensor z1 = batch_norm(a, block.bn1, opts.training, cache ? &cache->bn1 : nullptr);
  o.h1 = activation(z1, opts.activation, k);
  Tensor b = cflog_forward_impl(o.h1, block.second, cache ? &cache->c2 : nullptr);
  Tensor z2 = batch_norm(b, block.bn2, opts.training, cache ? &cache->bn2 : nullptr);
  o.i1 = activation(z2, opts.activation, k);
  if (!(o.i1.shape() == x.shape())) throw ShapeError("mrb: residual shape mismatch");

  o.select = quantized ? tgap_codewords(x, k) : tgap_full_precision(x);
  Tensor i0(x.shape());
  auto xs = x.values();
  auto is = o.i1.values();
  auto ds = i0.values();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double y = xs[i] + is[i];
    ds[i] = quantized ? bitshift(y, k) : 0.5 * y;
  }
  o.out = mux(i0, o.i1, o.select);
  if (cache != nullptr) {
    cache->input = x;
    cache->z1 = std::move(z1);
    cache->h1 = o.h1;
    cache->z2 = std::move(z2);
    cache->i1 = o.i1;
    cache->select = o.select;
  }
  return o;
}

Tensor mrb_forward(const Tensor& x, const Mrb& block, int k) {
  // Inference mode never mutates BN state.
  return mrb_forward(x, const_cast<Mrb&>(block), k, ForwardOptions{}).out;
}

Tensor model_forward(Model& model, const Tensor& images, const ForwardOptions& opts,
                     ModelCache* cache, RealTrace* trace) {
  const ModelConfig& cfg = model.cfg;
  if (images.c() != cfg.in_channels) throw ShapeError("input channel count mismatch");
  if (cache != nullptr) {
    cache->input = images;
    cache->blocks.assign(model.blocks.size(), MrbCache{});
    cache->pool_inputs.clear();
  }
  Tensor stem = conv2d<double>(images, model.stem.real_weight(), 1, Padding::kSame);
  Tensor z = batch_norm(stem, model.stem_bn, opts.training, cache ? &cache->stem_bn : nullptr);
  Tensor h = activation(z, opts.activation, cfg.k);
  if (cache != nullptr) cache->stem_z = std::move(z);
  if (trace != nullptr) trace->emplace_back("stem", h);

  int idx = 0;
  for (int s = 0; s < cfg.stages; ++s) {
    for (int j = 0; j < cfg.blocks_per_stage; ++j, ++idx) {
      MrbOutputs o = mrb_forward(h, model.blocks[idx], cfg.k, opts,
                                 cache ? &cache->blocks[idx] : nullptr);
      if (trace != nullptr) {
        const std::string name = "block" + std::to_string(idx);
        trace->emplace_back(name + ".h1", o.h1);
        trace->emplace_back(name + ".i1", o.i1);
        trace->emplace_back(name + ".out", o.out);
      }
      h = std::move(o.out);
    }
    if (cache != nullptr) cache->pool_inputs.push_back(h);
    h = maxpool2x2(h);
    if (trace != nullptr) trace->emplace_back("stage" + std::to_string(s) + ".pool", h);
  }

  Tensor head = conv2d<double>(h, model.head.real_weight(), 1, Padding::kSame);
  Tensor hz = batch_norm(head, model.head_bn, opts.training, cache ? &cache->head_bn : nullptr);
  Tensor logits = global_avg_pool(hz);
  if (cache != nullptr) {
    cache->head_input = std::move(h);
    cache->head_z = std::move(hz);
  }
  return logits;
}

Tensor model_forward(const Model& model, const Tensor& images, RealTrace* trace) {
  return model_forward(const_cast<Model&>(model), images, ForwardOptions{}, nullptr, trace);
}

Tensor images_to_tensor(const std::vector<std::uint8_t>& pixels, Shape4 shape) {
  if (pixels.size() != shape.size()) throw ShapeError("pixel buffer does not match shape");
  Tensor t(shape);
  auto dst = t.values();
  for (std::size_t i = 0; i < pixels.size(); ++i) dst[i] = pixels[i] / 255.0;
  return t;
}

// ---- accounting -------------------------------------------------------------

Rational::Rational(std::int64_t n, std::int64_t d) {
  if (d == 0) throw ConfigError("rational with zero denominator");
  if (d < 0) {
    n = -n;
    d = -d;
  }
  const std::int64_t g = std::gcd(n, d);
  num = n / (g == 0 ? 1 : g);
  den = d / (g == 0 ? 1 : g);
}

Rational Rational::operator+(const Rational& o) const {
  const std::int64_t l = std::lcm(den, o.den);
  return {num * (l / den) + o.num * (l / o.den), l};
}

Rational Rational::operator*(const Rational& o) const {
  const std::int64_t g1 = std::gcd(num, o.den);
  const std::int64_t g2 = std::gcd(o.num, den);
  return {(num / (g1 ? g1 : 1)) * (o.num / (g2 ? g2 : 1)),
          (den / (g2 ? g2 : 1)) * (o.den / (g1 ? g1 : 1))};
}

Rational Rational::operator/(const Rational& o) const { return *this * Rational(o.den, o.num); }

std::string Rational::str() const { return std::to_string(num) + "/" + std::to_string(den); }

CompressionRate compression_rate(int c_in, int c_out, int groups) {
  require(c_in > 0 && c_out > 0 && groups > 0, "compression_rate", "inputs must be positive");
  require(c_in % 2 == 0, "compression_rate c_in", "must be even (m = C_i / 2)");
  const std::int64_t m = c_in / 2;
  require(m % groups == 0, "compression_rate groups", "must divide m = C_i / 2");
  CompressionRate cr;
  cr.closed_form = Rational(c_in, c_out) * (Rational(1, 18) + Rational(1, 4 * std::int64_t{groups}));
  cr.cflog_params = std::int64_t{c_in} * m + 9 * m * (m / groups);
  cr.conv_params = 9 * std::int64_t{c_in} * c_out;
  cr.counted = Rational(cr.cflog_params, cr.conv_params);
  return cr;
}

ParamCensus census(const ModelConfig& cfg) {
  cfg.validate();
  const std::int64_t n = cfg.n;
  const std::int64_t m = cfg.latent();
  const std::int64_t cflogs = 2 * std::int64_t{cfg.stages} * cfg.blocks_per_stage;
  ParamCensus c;
  c.ternary = std::int64_t{cfg.in_channels} * 9 * n + cflogs * 9 * m * (m / cfg.groups);
  c.binary = cflogs * n * m + n * cfg.class_count;
  c.ca_fixed = cflogs * m * n;
  c.bn_channels = n + cflogs * n + cfg.class_count;
  return c;
}

SizeReport size_report(const ModelConfig& cfg, int bn_bits) {
  cfg.validate();
  require(bn_bits > 0, "bn_bits", "must be positive");
  const std::int64_t n = cfg.n;
  const std::int64_t m = cfg.latent();
  SizeReport r;
  r.bn_bits = bn_bits;
  if (cfg.n == 128 && cfg.groups == 4) r.reference_mb = 1.72;
  auto add = [&r](std::string layer, std::string kind, std::int64_t count, int bits_each,
                  std::int64_t bits) {
    r.rows.push_back({std::move(layer), std::move(kind), count, bits_each, bits});
    r.total_bits += bits;
  };
  auto add_bn = [&](const std::string& layer, std::int64_t channels) {
    add(layer, "bn", 4 * channels, bn_bits, 4 * channels * bn_bits);
  };
  add("stem", "ternary", std::int64_t{cfg.in_channels} * 9 * n, 2,
      2 * std::int64_t{cfg.in_channels} * 9 * n);
  add_bn("stem.bn", n);
  bool seed_counted = false;
  const int total_blocks = cfg.stages * cfg.blocks_per_stage;
  for (int i = 0; i < total_blocks; ++i) {
    for (const char* part : {"first", "second"}) {
      const std::string base = "block" + std::to_string(i) + "." + part;
      add(base + ".reduce", "binary", n * m, 1, n * m);
      const std::int64_t grouped = 9 * m * (m / cfg.groups);
      add(base + ".grouped", "ternary", grouped, 2, 2 * grouped);
      const bool count_seed = !cfg.shared_ca_seed || !seed_counted;
      add(base + ".expand", "ca", n * m, 0, count_seed ? n : 0);
      seed_counted = true;
      r.cflog_rates.emplace_back(base, compression_rate(cfg.n, cfg.n, cfg.groups));
    }
    add_bn("block" + std::to_string(i) + ".bn1", n);
    add_bn("block" + std::to_string(i) + ".bn2", n);
  }
  add("head", "binary", n * cfg.class_count, 1, n * cfg.class_count);
  add_bn("head.bn", cfg.class_count);
  return r;
}

std::string SizeReport::text() const {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-24s %-8s %10s %5s %12s\n", "layer", "kind", "count", "bits",
                "total_bits");
  os << line;
  for (const SizeRow& row : rows) {
    std::snprintf(line, sizeof line, "%-24s %-8s %10lld %5d %12lld\n", row.layer.c_str(),
                  row.kind.c_str(), static_cast<long long>(row.count), row.bits_each,
                  static_cast<long long>(row.bits));
    os << line;
  }
  std::snprintf(line, sizeof line, "total: %lld bits = %.4f Mb (BN at %d bits/value)\n",
                static_cast<long long>(total_bits), megabits(), bn_bits);
  os << line;
  if (reference_mb > 0.0) {
    std::snprintf(line, sizeof line,
                  "reference: %.2f Mb reported for n=128, g=4 (different depth and packing)\n",
                  reference_mb);
    os << line;
  }
  for (const auto& [name, cr] : cflog_rates) {
    std::snprintf(line, sizeof line, "%-24s CR = %s (%.6f), %lld / %lld params\n", name.c_str(),
                  cr.closed_form.str().c_str(), cr.closed_form.value(),
                  static_cast<long long>(cr.cflog_params), static_cast<long long>(cr.conv_params));
    os << line;
  }
  return os.str();
}

std::string SizeReport::key_values() const {
  std::ostringstream os;
  for (const SizeRow& row : rows) {
    os << "layer=" << row.layer << " kind=" << row.kind << " count=" << row.count
       << " bits_each=" << row.bits_each << " bits=" << row.bits << '\n';
  }
  for (const auto& [name, cr] : cflog_rates) {
    os << "cflog=" << name << " cr=" << cr.closed_form.str() << " cr_counted=" << cr.counted.str()
       << " cflog_params=" << cr.cflog_params << " conv_params=" << cr.conv_params << '\n';
  }
  char mb[32];
  std::snprintf(mb, sizeof mb, "%.6f", megabits());
  os << "total_bits=" << total_bits << '\n' << "total_mb=" << mb << '\n';
  return os.str();
}

}  // namespace mognet
