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

// Activation and weight quantizers with their straight-through masks.
//
// Activations live on the k-bit codebook {0, 1/L, ..., 1} with L = 2^k - 1.
// Weights are binarized to {-1, +1} or ternarized to {-1, 0, +1} with a step
// size that is re-derived from the proxy-weight tertiles once per epoch.
//
// Rounding to nearest resolves ties away from zero everywhere (std::round).

#ifndef MOGNET_QUANTIZERS_HPP_
#define MOGNET_QUANTIZERS_HPP_

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "mognet/errors.hpp"

namespace mognet {

// 1 where the gradient passes, 0 where it is blocked.
using SteMask = std::vector<std::uint8_t>;

inline int max_level(int k) {
  if (k < 1 || k > 16) throw ConfigError("activation bitwidth k must be in [1,16]");
  return (1 << k) - 1;
}

// Integer level in [0, 2^k - 1] that QReLU assigns to x.
inline int qrelu_level(double x, int k) {
  const int top = max_level(k);
  if (k == 1) return x > 0.0 ? 1 : 0;
  const double r = std::round(x * top);
  if (r <= 0.0) return 0;
  if (r >= top) return top;
  return static_cast<int>(r);
}

inline double codeword(int level, int k) {
  return static_cast<double>(level) / static_cast<double>(max_level(k));
}

inline double qrelu(double x, int k) { return codeword(qrelu_level(x, k), k); }

std::vector<double> qrelu_forward(std::span<const double> x, int k);
// 1_{|x| <= 1} on the raw pre-activation.
SteMask qrelu_backward(std::span<const double> x);

// Level produced by the rescaled residual addition of two k-bit levels:
// floor(sum / 2) for k > 1, ceil(sum / 2) (an OR) for k = 1.
inline int bitshift_level(int level_sum, int k) {
  return k == 1 ? (level_sum + 1) >> 1 : level_sum >> 1;
}

// y must be a sum of two k-bit codewords. Its integer level round(y * L) is
// recovered first so that the floor is taken on an exact integer; without it
// sums such as 1/3 + 1/3 can land just below 2/3 in binary64.
inline double bitshift(double y, int k) {
  const int level_sum = static_cast<int>(std::round(y * max_level(k)));
  return codeword(bitshift_level(level_sum, k), k);
}

std::vector<double> bitshift_forward(std::span<const double> y, int k);
// Fully passed-through gradient.
SteMask bitshift_backward(std::span<const double> y);

inline std::int8_t ternary(double w, double step) {
  const double r = std::round(w / step);
  if (r >= 1.0) return 1;
  if (r <= -1.0) return -1;
  return 0;
}

std::vector<std::int8_t> ternary_quantize(std::span<const double> w, double step);
// 1_{|w| <= 1}; shared by the ternary and binary weight quantizers.
SteMask weight_ste_mask(std::span<const double> w);

struct Tertiles {
  double q1 = 0.0;
  double q2 = 0.0;
};

// Sorted-array indexing at floor(N/3) and floor(2N/3), no interpolation.
Tertiles compute_tertiles(std::span<const double> w);

// Raised when both tertiles are zero and no positive step can be derived.
class DegenerateDistributionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// s = |q1| + |q2|.
double update_step_size(double q1, double q2);

// Step size state of one ternary layer.
struct TernarySpec {
  double step = 1.0;
  Tertiles tertiles;

  // Recomputes tertiles and the step. Returns false (keeping the previous
  // step) when the distribution is degenerate.
  bool refresh(std::span<const double> proxy);
};

inline std::int8_t binary(double w) { return w >= 0.0 ? 1 : -1; }
std::vector<std::int8_t> binarize(std::span<const double> w);

}  // namespace mognet

#endif  // MOGNET_QUANTIZERS_HPP_
