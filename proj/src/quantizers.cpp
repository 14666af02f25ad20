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

#include "mognet/quantizers.hpp"

#include <algorithm>

namespace mognet {

std::vector<double> qrelu_forward(std::span<const double> x, int k) {
  max_level(k);
  std::vector<double> y(x.size());
  std::transform(x.begin(), x.end(), y.begin(), [k](double v) { return qrelu(v, k); });
  return y;
}

SteMask qrelu_backward(std::span<const double> x) {
  SteMask mask(x.size());
  std::transform(x.begin(), x.end(), mask.begin(),
                 [](double v) { return static_cast<std::uint8_t>(std::abs(v) <= 1.0); });
  return mask;
}

std::vector<double> bitshift_forward(std::span<const double> y, int k) {
  max_level(k);
  std::vector<double> out(y.size());
  std::transform(y.begin(), y.end(), out.begin(), [k](double v) { return bitshift(v, k); });
  return out;
}

SteMask bitshift_backward(std::span<const double> y) { return SteMask(y.size(), 1); }

std::vector<std::int8_t> ternary_quantize(std::span<const double> w, double step) {
  if (!(step > 0.0)) throw ConfigError("ternary step size must be positive");
  std::vector<std::int8_t> q(w.size());
  std::transform(w.begin(), w.end(), q.begin(), [step](double v) { return ternary(v, step); });
  return q;
}

SteMask weight_ste_mask(std::span<const double> w) { return qrelu_backward(w); }

Tertiles compute_tertiles(std::span<const double> w) {
  if (w.size() < 3) throw ConfigError("tertiles need at least 3 values");
  std::vector<double> sorted(w.begin(), w.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  return {sorted[n / 3], sorted[2 * n / 3]};
}

double update_step_size(double q1, double q2) {
  const double s = std::abs(q1) + std::abs(q2);
  if (!(s > 0.0)) throw DegenerateDistributionError("both tertiles are zero; step size would vanish");
  return s;
}

bool TernarySpec::refresh(std::span<const double> proxy) {
  const Tertiles t = compute_tertiles(proxy);
  try {
    step = update_step_size(t.q1, t.q2);
  } catch (const DegenerateDistributionError&) {
    return false;
  }
  tertiles = t;
  return true;
}

std::vector<std::int8_t> binarize(std::span<const double> w) {
  std::vector<std::int8_t> q(w.size());
  std::transform(w.begin(), w.end(), q.begin(), [](double v) { return binary(v); });
  return q;
}

}  // namespace mognet
