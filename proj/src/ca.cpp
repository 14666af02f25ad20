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

#include "mognet/ca.hpp"

#include <algorithm>
#include <random>

namespace mognet {

void CAConfig::validate() const {
  if (rule < 0 || rule > 255) throw ConfigError("ca rule must be in [0,255], got " + std::to_string(rule));
  if (width < 3) throw ConfigError("ca width must be at least 3, got " + std::to_string(width));
  if (steps < 1) throw ConfigError("ca steps must be positive");
  if (static_cast<int>(seed_row.size()) != width) {
    throw ConfigError("ca seed row has length " + std::to_string(seed_row.size()) +
                      ", expected " + std::to_string(width));
  }
  bool any = false;
  for (std::uint8_t b : seed_row) {
    if (b > 1) throw ConfigError("ca seed row entries must be 0 or 1");
    any = any || b == 1;
  }
  if (!any) throw ConfigError("ca seed row must not be all zero");
}

BitRow CAKernel::column(int t) const {
  BitRow col(width_);
  for (int i = 0; i < width_; ++i) col[i] = state(i, t);
  return col;
}

Tensor4<std::int8_t> CAKernel::weight() const {
  Tensor4<std::int8_t> w({width_, steps_, 1, 1});
  for (int o = 0; o < width_; ++o) {
    for (int t = 0; t < steps_; ++t) w.at(o, t, 0, 0) = static_cast<std::int8_t>(mapped(o, t));
  }
  return w;
}

BitRow ca_step(std::span<const std::uint8_t> row, int rule) {
  const int n = static_cast<int>(row.size());
  if (n < 3) throw ConfigError("ca_step requires at least 3 cells");
  if (rule < 0 || rule > 255) throw ConfigError("ca rule must be in [0,255]");
  BitRow next(n);
  for (int i = 0; i < n; ++i) {
    const int pattern = (row[(i + n - 1) % n] << 2) | (row[i] << 1) | row[(i + 1) % n];
    next[i] = static_cast<std::uint8_t>((rule >> pattern) & 1);
  }
  return next;
}

CAKernel generate_kernel(const CAConfig& cfg) {
  cfg.validate();
  CAKernel kernel(cfg.width, cfg.steps);
  BitRow row = cfg.seed_row;
  for (int t = 0; t < cfg.steps; ++t) {
    row = ca_step(row, cfg.rule);
    for (int i = 0; i < cfg.width; ++i) kernel.set_state(i, t, row[i]);
  }
  return kernel;
}

BitRow default_seed(int width, std::uint64_t rng_seed) {
  if (width < 3) throw ConfigError("seed width must be at least 3");
  BitRow row(width, 0);
  std::fill(row.begin(), row.begin() + width / 2, 1);
  std::mt19937_64 rng(rng_seed);
  // Fisher-Yates on raw engine output; std::shuffle is not portable across
  // standard libraries and seeds end up in checkpoints.
  for (int i = width - 1; i > 0; --i) {
    const auto j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(row[i], row[j]);
  }
  return row;
}

std::string format_states(const CAKernel& kernel) {
  std::string out;
  out.reserve(static_cast<std::size_t>(kernel.steps()) * (kernel.width() + 1));
  for (int t = 0; t < kernel.steps(); ++t) {
    for (int i = 0; i < kernel.width(); ++i) out.push_back(kernel.state(i, t) ? '1' : '0');
    out.push_back('\n');
  }
  return out;
}

}  // namespace mognet
