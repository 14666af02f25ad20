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

// Elementary cellular automata used to regenerate fixed pointwise kernels
// from a stored seed row instead of storing the kernel itself.

#ifndef MOGNET_CA_HPP_
#define MOGNET_CA_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mognet/tensor.hpp"

namespace mognet {

using BitRow = std::vector<std::uint8_t>;

struct CAConfig {
  int rule = 30;
  int width = 0;  // number of cells, equals the output channel count
  int steps = 0;  // number of recorded updates, equals the latent width
  BitRow seed_row;

  // Throws ConfigError on an out-of-range rule, a seed of the wrong length,
  // non-binary entries, or an all-zero seed.
  void validate() const;
  bool operator==(const CAConfig&) const = default;
};

// states(cell, t) is the value of `cell` after t + 1 updates of the seed.
class CAKernel {
 public:
  CAKernel() = default;
  CAKernel(int width, int steps) : width_(width), steps_(steps), states_(width * steps, 0) {}

  int width() const { return width_; }
  int steps() const { return steps_; }
  std::uint8_t state(int cell, int t) const { return states_[cell * steps_ + t]; }
  void set_state(int cell, int t, std::uint8_t v) { states_[cell * steps_ + t] = v; }
  // 0 -> -1, 1 -> +1.
  int mapped(int cell, int t) const { return 2 * state(cell, t) - 1; }
  BitRow column(int t) const;

  // Pointwise weight of shape (width, steps, 1, 1): column t feeds latent
  // channel t into every output channel.
  Tensor4<std::int8_t> weight() const;

  bool operator==(const CAKernel&) const = default;

 private:
  int width_ = 0;
  int steps_ = 0;
  std::vector<std::uint8_t> states_;
};

// One synchronous update with circular boundary. Neighborhood
// (left, center, right) selects bit 4*left + 2*center + right of `rule`.
BitRow ca_step(std::span<const std::uint8_t> row, int rule);

CAKernel generate_kernel(const CAConfig& cfg);

// Balanced pseudo-random seed: exactly width/2 ones, positions shuffled by a
// 64-bit Mersenne Twister seeded with rng_seed.
BitRow default_seed(int width, std::uint64_t rng_seed);

// Space-time diagram, one line of 0/1 characters per update.
std::string format_states(const CAKernel& kernel);

}  // namespace mognet

#endif  // MOGNET_CA_HPP_
