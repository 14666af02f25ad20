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

#include <cstdio>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "mognet/checkpoint.hpp"
#include "mognet/int_inference.hpp"
#include "oracles.hpp"

using namespace mognet;

namespace {

Model trained_like_model(std::uint64_t seed) {
  ModelConfig cfg;
  cfg.n = 16;
  cfg.groups = 2;
  cfg.k = 2;
  cfg.stages = 2;
  cfg.class_count = 3;
  cfg.image_size = 8;
  cfg.master_seed = seed;
  Model m = build_model(cfg);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (BNParams* bn : m.bn_layers()) {
    for (int c = 0; c < bn->channels(); ++c) {
      bn->gamma[c] = u(rng);
      bn->beta[c] = u(rng);
      bn->moving_mean[c] = u(rng) * 3.0;
      bn->moving_var[c] = std::abs(u(rng)) * 5.0;
    }
  }
  m.freeze();
  return m;
}

std::size_t header_bytes() { return 8 + 2 + 9 * 4 + 1 + 8; }

}  // namespace

TEST_SUITE("checkpoint") {

TEST_CASE("packing tables") {
  CHECK(pack_ternary({0, 1, -1, 0}) == std::vector<std::uint8_t>{0b00'11'01'00});
  CHECK(pack_ternary({1, 1, 1, 1, -1}) == std::vector<std::uint8_t>{0x55, 0x03});
  CHECK(pack_binary({1, -1, 1, 1, -1, -1, -1, 1, 1}) == std::vector<std::uint8_t>{0b1000'1101, 0x01});
}

TEST_CASE("export, import, export is byte identical") {
  const Model a = trained_like_model(3);
  const auto bytes = serialize_checkpoint(a);
  const Model b = deserialize_checkpoint(bytes);
  CHECK(serialize_checkpoint(b) == bytes);
  CHECK(b.cfg == a.cfg);
  CHECK(b.stem.codes == a.stem.codes);
  CHECK(b.head.codes == a.head.codes);
  CHECK(b.head_bn.gamma == a.head_bn.gamma);
  CHECK(b.head_bn.moving_var == a.head_bn.moving_var);
  CHECK(b.stem.proxy.empty());
}

TEST_CASE("CA kernels are regenerated bit for bit") {
  const Model a = trained_like_model(4);
  const Model b = deserialize_checkpoint(serialize_checkpoint(a));
  REQUIRE(a.blocks.size() == b.blocks.size());
  for (std::size_t i = 0; i < a.blocks.size(); ++i) {
    CHECK(a.blocks[i].first.expand == b.blocks[i].first.expand);
    CHECK(a.blocks[i].second.expand == b.blocks[i].second.expand);
    CHECK(a.blocks[i].first.cfg.ca == b.blocks[i].first.cfg.ca);
    // Independent regeneration from the stored seed.
    const CAConfig& ca = b.blocks[i].second.cfg.ca;
    std::vector<int> row(ca.seed_row.begin(), ca.seed_row.end());
    for (int t = 0; t < ca.steps; ++t) {
      row = oracle::ca_update(row, ca.rule);
      for (int cell = 0; cell < ca.width; ++cell) CHECK(b.blocks[i].second.expand.state(cell, t) == row[cell]);
    }
  }
}

TEST_CASE("imported model's integer forward agrees exactly") {
  const Model a = trained_like_model(5);
  const Model b = deserialize_checkpoint(serialize_checkpoint(a));
  const IntModel ia(a), ib(b);
  std::mt19937_64 rng(5);
  std::vector<std::uint8_t> px(100 * 3 * 64);
  for (auto& v : px) v = static_cast<std::uint8_t>(rng() % 256);
  const QuantTensor q = pixels_to_quant(px, {100, 3, 8, 8});
  const auto pa = ia.forward(q);
  const auto pb = ib.forward(q);
  for (int i = 0; i < 100; ++i) {
    CHECK(pa[i].scores == pb[i].scores);
    CHECK(pa[i].label == pb[i].label);
  }
}

TEST_CASE("file round trip") {
  const Model a = trained_like_model(6);
  const auto path = std::filesystem::temp_directory_path() / "mognet_ckpt_roundtrip.ckpt";
  export_checkpoint(a, path.string());
  CHECK(serialize_checkpoint(import_checkpoint(path.string())) == serialize_checkpoint(a));
  std::filesystem::remove(path);
  CHECK_THROWS_AS(import_checkpoint(path.string()), DataError);
}

TEST_CASE("every single-byte header corruption is a parse error") {
  const auto bytes = serialize_checkpoint(trained_like_model(7));
  for (std::size_t i = 0; i < header_bytes(); ++i) {
    for (std::uint8_t flip : {0x01, 0x80, 0xFF}) {
      auto bad = bytes;
      bad[i] ^= flip;
      CHECK_THROWS_AS(deserialize_checkpoint(bad), ParseError);
    }
  }
}

TEST_CASE("parse errors carry the byte offset") {
  auto bytes = serialize_checkpoint(trained_like_model(8));
  auto bad_magic = bytes;
  bad_magic[2] = 'X';
  try {
    deserialize_checkpoint(bad_magic);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.offset() == 0);
  }
  auto bad_version = bytes;
  bad_version[8] = 9;
  try {
    deserialize_checkpoint(bad_version);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.offset() == 8);
  }
  auto bad_body = bytes;
  bad_body[bytes.size() / 2] ^= 0x10;
  try {
    deserialize_checkpoint(bad_body);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.offset() == bytes.size() - 8);
  }
}

TEST_CASE("ternary code 10 is rejected even under a valid checksum") {
  auto bytes = serialize_checkpoint(trained_like_model(11));
  const std::size_t stem_codes = header_bytes() + 1 + 16;
  bytes[stem_codes] = (bytes[stem_codes] & 0xFC) | 0x02;
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i + 8 < bytes.size(); ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ull;
  }
  for (int i = 0; i < 8; ++i) bytes[bytes.size() - 8 + i] = static_cast<std::uint8_t>(h >> (8 * i));
  try {
    deserialize_checkpoint(bytes);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.offset() == stem_codes);
  }
}

TEST_CASE("truncation at any length is a parse error") {
  const auto bytes = serialize_checkpoint(trained_like_model(9));
  for (std::size_t len = 0; len < bytes.size(); ++len) {
    const std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(len));
    CHECK_THROWS_AS(deserialize_checkpoint(cut), ParseError);
  }
}

TEST_CASE("random corruption never crashes") {
  const auto bytes = serialize_checkpoint(trained_like_model(10));
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 300; ++trial) {
    auto bad = bytes;
    const int edits = 1 + static_cast<int>(rng() % 4);
    for (int e = 0; e < edits; ++e) bad[rng() % bad.size()] = static_cast<std::uint8_t>(rng());
    if (bad == bytes) continue;
    CHECK_THROWS_AS(deserialize_checkpoint(bad), ParseError);
  }
}

}  // TEST_SUITE
