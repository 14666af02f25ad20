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

#include "mognet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>

namespace mognet {

namespace {

std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
  void bytes(const std::vector<std::uint8_t>& b) { out_.insert(out_.end(), b.begin(), b.end()); }
  std::vector<std::uint8_t>& data() { return out_; }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& b, std::size_t limit) : b_(b), limit_(limit) {}

  std::size_t pos() const { return pos_; }
  void need(std::size_t n) const {
    if (pos_ + n > limit_) throw ParseError("truncated checkpoint", pos_);
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  double f32() { return static_cast<double>(std::bit_cast<float>(u32())); }
  // u32 that must lie in [lo, hi].
  int bounded(int lo, int hi, const char* what) {
    const std::size_t at = pos_;
    const std::uint32_t v = u32();
    if (v < static_cast<std::uint32_t>(lo) || v > static_cast<std::uint32_t>(hi)) {
      throw ParseError(std::string("field ") + what + " out of range: " + std::to_string(v), at);
    }
    return static_cast<int>(v);
  }
  const std::uint8_t* take(std::size_t n) {
    need(n);
    const std::uint8_t* p = b_.data() + pos_;
    pos_ += n;
    return p;
  }

 private:
  std::uint64_t le(int n) {
    need(n);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(b_[pos_ + i]) << (8 * i);
    pos_ += n;
    return v;
  }
  const std::vector<std::uint8_t>& b_;
  std::size_t limit_;
  std::size_t pos_ = 0;
};

void write_weight(Writer& w, const QuantWeight& q) {
  w.u8(static_cast<std::uint8_t>(q.kind));
  w.u32(q.shape.n);
  w.u32(q.shape.c);
  w.u32(q.shape.h);
  w.u32(q.shape.w);
  w.bytes(q.kind == WeightKind::kTernary ? pack_ternary(q.codes) : pack_binary(q.codes));
}

void write_bn(Writer& w, const BNParams& p) {
  w.u32(p.channels());
  for (const auto* v : {&p.gamma, &p.beta, &p.moving_mean, &p.moving_var}) {
    for (double x : *v) w.f32(x);
  }
  w.f32(p.epsilon);
}

void write_bits(Writer& w, const BitRow& row) {
  std::vector<std::uint8_t> packed((row.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < row.size(); ++i) packed[i / 8] |= (row[i] & 1) << (i % 8);
  w.bytes(packed);
}

void write_cflog(Writer& w, const Cflog& c) {
  w.u32(c.cfg.c_in);
  w.u32(c.cfg.c_out);
  w.u32(c.cfg.latent);
  w.u32(c.cfg.groups);
  w.u32(c.cfg.ca.rule);
  w.u32(c.cfg.ca.width);
  w.u32(c.cfg.ca.steps);
  write_bits(w, c.cfg.ca.seed_row);
  write_weight(w, c.reduce);
  write_weight(w, c.grouped);
}

QuantWeight read_weight(Reader& r, WeightKind expected_kind, const Shape4& expected) {
  const std::size_t at = r.pos();
  const std::uint8_t kind = r.u8();
  if (kind != static_cast<std::uint8_t>(expected_kind)) {
    throw ParseError("unexpected weight kind " + std::to_string(kind), at);
  }
  const std::size_t shape_at = r.pos();
  Shape4 s;
  s.n = static_cast<int>(r.u32());
  s.c = static_cast<int>(r.u32());
  s.h = static_cast<int>(r.u32());
  s.w = static_cast<int>(r.u32());
  if (!(s == expected)) {
    throw ParseError("weight shape " + s.str() + " does not match expected " + expected.str(),
                     shape_at);
  }
  QuantWeight q(expected_kind, s);
  const std::size_t count = s.size();
  if (expected_kind == WeightKind::kTernary) {
    const std::size_t data_at = r.pos();
    const std::uint8_t* p = r.take((count + 3) / 4);
    for (std::size_t i = 0; i < count; ++i) {
      const int code = (p[i / 4] >> (2 * (i % 4))) & 3;
      if (code == 2) throw ParseError("invalid ternary code 10", data_at + i / 4);
      q.codes[i] = code == 0 ? 0 : (code == 1 ? 1 : -1);
    }
  } else {
    const std::uint8_t* p = r.take((count + 7) / 8);
    for (std::size_t i = 0; i < count; ++i) q.codes[i] = ((p[i / 8] >> (i % 8)) & 1) ? 1 : -1;
  }
  return q;
}

BNParams read_bn(Reader& r, int expected_channels) {
  const std::size_t at = r.pos();
  const int channels = static_cast<int>(r.u32());
  if (channels != expected_channels) {
    throw ParseError("bn channel count " + std::to_string(channels) + " does not match expected " +
                     std::to_string(expected_channels), at);
  }
  BNParams p(channels);
  for (auto* v : {&p.gamma, &p.beta, &p.moving_mean, &p.moving_var}) {
    for (double& x : *v) x = r.f32();
  }
  const std::size_t eps_at = r.pos();
  p.epsilon = r.f32();
  try {
    p.validate();
  } catch (const ConfigError& e) {
    throw ParseError(e.what(), eps_at);
  }
  return p;
}

Cflog read_cflog(Reader& r, const ModelConfig& cfg) {
  const std::size_t at = r.pos();
  CflogConfig c;
  c.c_in = r.bounded(cfg.n, cfg.n, "cflog.c_in");
  c.c_out = r.bounded(cfg.n, cfg.n, "cflog.c_out");
  c.latent = r.bounded(cfg.latent(), cfg.latent(), "cflog.latent");
  c.groups = r.bounded(cfg.groups, cfg.groups, "cflog.groups");
  c.ca.rule = r.bounded(cfg.ca_rule, cfg.ca_rule, "cflog.ca.rule");
  c.ca.width = r.bounded(cfg.n, cfg.n, "cflog.ca.width");
  c.ca.steps = r.bounded(cfg.latent(), cfg.latent(), "cflog.ca.steps");
  const std::uint8_t* bits = r.take((c.ca.width + 7) / 8);
  c.ca.seed_row.resize(c.ca.width);
  for (int i = 0; i < c.ca.width; ++i) c.ca.seed_row[i] = (bits[i / 8] >> (i % 8)) & 1;
  std::optional<Cflog> layer;
  try {
    layer.emplace(c);
  } catch (const ConfigError& e) {
    throw ParseError(e.what(), at);
  }
  layer->reduce = read_weight(r, WeightKind::kBinary, layer->reduce.shape);
  layer->grouped = read_weight(r, WeightKind::kTernary, layer->grouped.shape);
  return std::move(*layer);
}

}  // namespace

std::vector<std::uint8_t> pack_ternary(const std::vector<std::int8_t>& codes) {
  std::vector<std::uint8_t> out((codes.size() + 3) / 4, 0);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    const std::uint8_t code = codes[i] == 0 ? 0 : (codes[i] > 0 ? 1 : 3);
    out[i / 4] |= code << (2 * (i % 4));
  }
  return out;
}

std::vector<std::uint8_t> pack_binary(const std::vector<std::int8_t>& codes) {
  std::vector<std::uint8_t> out((codes.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (codes[i] > 0) out[i / 8] |= 1 << (i % 8);
  }
  return out;
}

std::vector<std::uint8_t> serialize_checkpoint(const Model& model) {
  const ModelConfig& cfg = model.cfg;
  Writer w;
  for (char ch : kCheckpointMagic) w.u8(static_cast<std::uint8_t>(ch));
  w.u16(kCheckpointVersion);
  for (int v : {cfg.n, cfg.groups, cfg.k, cfg.stages, cfg.blocks_per_stage, cfg.class_count,
                cfg.in_channels, cfg.image_size, cfg.ca_rule}) {
    w.u32(static_cast<std::uint32_t>(v));
  }
  w.u8(cfg.shared_ca_seed ? 1 : 0);
  w.u64(cfg.master_seed);
  write_weight(w, model.stem);
  write_bn(w, model.stem_bn);
  for (const Mrb& b : model.blocks) {
    write_cflog(w, b.first);
    write_bn(w, b.bn1);
    write_cflog(w, b.second);
    write_bn(w, b.bn2);
  }
  write_weight(w, model.head);
  write_bn(w, model.head_bn);
  w.u64(fnv1a(w.data().data(), w.data().size()));
  return std::move(w.data());
}

Model deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  constexpr std::size_t kTrailer = 8;
  if (bytes.size() < sizeof kCheckpointMagic) throw ParseError("truncated checkpoint", bytes.size());
  if (std::memcmp(bytes.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
    throw ParseError("bad magic", 0);
  }
  Reader header(bytes, bytes.size());
  header.take(sizeof kCheckpointMagic);
  const std::uint16_t version = header.u16();
  if (version != kCheckpointVersion) {
    throw ParseError("unsupported checkpoint version " + std::to_string(version),
                     sizeof kCheckpointMagic);
  }
  if (bytes.size() < kTrailer + 10) throw ParseError("truncated checkpoint", bytes.size());
  const std::size_t payload = bytes.size() - kTrailer;
  std::uint64_t stored = 0;
  for (std::size_t i = 0; i < kTrailer; ++i) {
    stored |= static_cast<std::uint64_t>(bytes[payload + i]) << (8 * i);
  }
  if (stored != fnv1a(bytes.data(), payload)) throw ParseError("checksum mismatch", payload);

  Reader r(bytes, payload);
  r.take(sizeof kCheckpointMagic + 2);
  ModelConfig cfg;
  const std::size_t cfg_at = r.pos();
  cfg.n = r.bounded(4, 1 << 20, "n");
  cfg.groups = r.bounded(1, 1 << 20, "groups");
  cfg.k = r.bounded(1, 8, "k");
  cfg.stages = r.bounded(1, 30, "stages");
  cfg.blocks_per_stage = r.bounded(1, 1 << 10, "blocks_per_stage");
  cfg.class_count = r.bounded(2, 1 << 20, "class_count");
  cfg.in_channels = r.bounded(1, 1 << 10, "in_channels");
  cfg.image_size = r.bounded(2, 1 << 16, "image_size");
  cfg.ca_rule = r.bounded(0, 255, "ca_rule");
  const std::size_t flag_at = r.pos();
  const std::uint8_t shared = r.u8();
  if (shared > 1) throw ParseError("shared_ca_seed flag must be 0 or 1", flag_at);
  cfg.shared_ca_seed = shared == 1;
  cfg.master_seed = r.u64();
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw ParseError(e.what(), cfg_at);
  }

  Model model;
  model.cfg = cfg;
  model.stem = read_weight(r, WeightKind::kTernary, {cfg.n, cfg.in_channels, 3, 3});
  model.stem_bn = read_bn(r, cfg.n);
  const int total_blocks = cfg.stages * cfg.blocks_per_stage;
  model.blocks.reserve(total_blocks);
  for (int i = 0; i < total_blocks; ++i) {
    Cflog first = read_cflog(r, cfg);
    BNParams bn1 = read_bn(r, cfg.n);
    Cflog second = read_cflog(r, cfg);
    BNParams bn2 = read_bn(r, cfg.n);
    model.blocks.push_back(Mrb{std::move(first), std::move(bn1), std::move(second), std::move(bn2)});
  }
  model.head = read_weight(r, WeightKind::kBinary, {cfg.class_count, cfg.n, 1, 1});
  model.head_bn = read_bn(r, cfg.class_count);
  if (r.pos() != payload) throw ParseError("trailing bytes after model payload", r.pos());
  return model;
}

void export_checkpoint(const Model& model, const std::string& path) {
  const std::vector<std::uint8_t> bytes = serialize_checkpoint(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path);
}

Model import_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace mognet
