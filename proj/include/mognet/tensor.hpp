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

// Dense NCHW tensors plus the direct-loop convolution, pooling and batch
// normalization primitives used by both the training graph and the integer
// engine.

#ifndef MOGNET_TENSOR_HPP_
#define MOGNET_TENSOR_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mognet/errors.hpp"

namespace mognet {

struct Shape4 {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  bool operator==(const Shape4&) const = default;
  std::string str() const;
};

template <typename T>
class Tensor4 {
 public:
  using value_type = T;

  Tensor4() = default;
  explicit Tensor4(Shape4 shape, T fill = T{}) : shape_(shape) {
    if (shape.n <= 0 || shape.c <= 0 || shape.h <= 0 || shape.w <= 0) {
      throw ShapeError("tensor dims must be positive, got " + shape.str());
    }
    data_.assign(shape.size(), fill);
  }
  Tensor4(Shape4 shape, std::vector<T> data) : Tensor4(shape) {
    if (data.size() != shape.size()) {
      throw ShapeError("data length " + std::to_string(data.size()) +
                       " does not match " + shape.str());
    }
    data_ = std::move(data);
  }

  const Shape4& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int c() const { return shape_.c; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t index(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }
  T& at(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
  const T& at(int n, int c, int y, int x) const { return data_[index(n, c, y, x)]; }

  T* plane(int n, int c) { return data_.data() + index(n, c, 0, 0); }
  const T* plane(int n, int c) const { return data_.data() + index(n, c, 0, 0); }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T>& raw() { return data_; }
  const std::vector<T>& raw() const { return data_; }

  bool operator==(const Tensor4&) const = default;

 private:
  Shape4 shape_;
  std::vector<T> data_;
};

using Tensor = Tensor4<double>;

// Runs fn(i) for i in [0, count). Work items must write disjoint memory.
void parallel_for(int count, const std::function<void(int)>& fn);

enum class Padding { kSame, kValid };

// Output extent and leading pad along one spatial axis.
struct AxisGeometry {
  int out = 0;
  int pad_before = 0;
};

inline AxisGeometry axis_geometry(int in, int kernel, int stride, Padding padding) {
  if (stride <= 0) throw ConfigError("stride must be positive");
  if (padding == Padding::kValid) {
    if (in < kernel) throw ShapeError("input smaller than kernel under valid padding");
    return {(in - kernel) / stride + 1, 0};
  }
  const int out = (in + stride - 1) / stride;
  const int total = std::max((out - 1) * stride + kernel - in, 0);
  return {out, total / 2};
}

// Weight layout is (c_out, c_in / groups, kh, kw). Accumulation happens in
// Acc; the integer engine validates its worst-case bound before calling.
template <typename Acc, typename T, typename W>
Tensor4<Acc> conv2d(const Tensor4<T>& x, const Tensor4<W>& weight, int groups,
                    Padding padding, int stride = 1) {
  if (groups <= 0) throw ConfigError("groups must be positive");
  const int c_in = x.c();
  const int c_out = weight.n();
  if (c_in % groups != 0 || c_out % groups != 0) {
    throw ConfigError("groups=" + std::to_string(groups) + " does not divide c_in=" +
                      std::to_string(c_in) + " and c_out=" + std::to_string(c_out));
  }
  const int in_per_group = c_in / groups;
  const int out_per_group = c_out / groups;
  if (weight.c() != in_per_group) {
    throw ShapeError("weight expects " + std::to_string(weight.c()) +
                     " input channels per group, input provides " +
                     std::to_string(in_per_group));
  }
  const int kh = weight.h();
  const int kw = weight.w();
  const AxisGeometry gy = axis_geometry(x.h(), kh, stride, padding);
  const AxisGeometry gx = axis_geometry(x.w(), kw, stride, padding);
  Tensor4<Acc> out({x.n(), c_out, gy.out, gx.out}, Acc{});

  parallel_for(x.n(), [&](int b) {
    for (int oc = 0; oc < c_out; ++oc) {
      const int g = oc / out_per_group;
      Acc* dst = out.plane(b, oc);
      for (int icg = 0; icg < in_per_group; ++icg) {
        const T* src = x.plane(b, g * in_per_group + icg);
        for (int ky = 0; ky < kh; ++ky) {
          for (int kx = 0; kx < kw; ++kx) {
            const W wv = weight.at(oc, icg, ky, kx);
            if (wv == W{}) continue;
            for (int oy = 0; oy < gy.out; ++oy) {
              const int iy = oy * stride + ky - gy.pad_before;
              if (iy < 0 || iy >= x.h()) continue;
              Acc* drow = dst + static_cast<std::size_t>(oy) * gx.out;
              const T* srow = src + static_cast<std::size_t>(iy) * x.w();
              for (int ox = 0; ox < gx.out; ++ox) {
                const int ix = ox * stride + kx - gx.pad_before;
                if (ix < 0 || ix >= x.w()) continue;
                drow[ox] += static_cast<Acc>(srow[ix]) * static_cast<Acc>(wv);
              }
            }
          }
        }
      }
    }
  });
  return out;
}

// Gradient of conv2d with respect to its input.
Tensor conv2d_backward_input(const Tensor& grad_out, const Tensor& weight, int groups,
                             Padding padding, int stride, const Shape4& input_shape);

// Gradient of conv2d with respect to its weight.
Tensor conv2d_backward_weight(const Tensor& x, const Tensor& grad_out, const Shape4& weight_shape,
                              int groups, Padding padding, int stride);

template <typename T>
Tensor4<T> maxpool2x2(const Tensor4<T>& x) {
  if (x.h() % 2 != 0 || x.w() % 2 != 0) {
    throw ShapeError("maxpool2x2 requires even spatial dims, got " + x.shape().str());
  }
  Tensor4<T> out({x.n(), x.c(), x.h() / 2, x.w() / 2});
  for (int b = 0; b < x.n(); ++b) {
    for (int c = 0; c < x.c(); ++c) {
      for (int y = 0; y < out.h(); ++y) {
        for (int xx = 0; xx < out.w(); ++xx) {
          out.at(b, c, y, xx) = std::max({x.at(b, c, 2 * y, 2 * xx), x.at(b, c, 2 * y, 2 * xx + 1),
                                          x.at(b, c, 2 * y + 1, 2 * xx),
                                          x.at(b, c, 2 * y + 1, 2 * xx + 1)});
        }
      }
    }
  }
  return out;
}

// Routes each output gradient to the first maximal element of its window.
Tensor maxpool2x2_backward(const Tensor& x, const Tensor& grad_out);

// Mean over h*w; result has shape (n, c, 1, 1).
Tensor global_avg_pool(const Tensor& x);
Tensor global_avg_pool_backward(const Tensor& grad_out, const Shape4& input_shape);

// Per-channel inference-time affine of batch normalization. Shared by the
// real-valued engine and the threshold folding so both evaluate the very
// same floating-point expression.
struct BnChannel {
  double gamma = 1.0;
  double beta = 0.0;
  double mean = 0.0;
  double denom = 1.0;  // sqrt(moving_var + eps)

  double apply(double x) const { return gamma * (x - mean) / denom + beta; }
};

struct BNParams {
  std::vector<double> gamma;
  std::vector<double> beta;
  std::vector<double> moving_mean;
  std::vector<double> moving_var;
  double epsilon = 1e-5;
  double momentum = 0.99;

  BNParams() = default;
  explicit BNParams(int channels)
      : gamma(channels, 1.0), beta(channels, 0.0), moving_mean(channels, 0.0),
        moving_var(channels, 1.0) {}

  int channels() const { return static_cast<int>(gamma.size()); }
  void validate() const;
  BnChannel channel(int c) const {
    return {gamma[c], beta[c], moving_mean[c], std::sqrt(moving_var[c] + epsilon)};
  }
  // Rounds every stored value to binary32, the checkpoint precision.
  void round_to_float();
};

// Saved by training-mode batch_norm for the backward pass.
struct BnCache {
  Tensor normalized;
  std::vector<double> inv_std;
};

// Training mode normalizes with batch statistics and folds them into the
// moving statistics with p.momentum; inference mode uses the moving
// statistics. `cache` is only written in training mode.
Tensor batch_norm(const Tensor& x, BNParams& p, bool training, BnCache* cache = nullptr);
Tensor batch_norm_inference(const Tensor& x, const BNParams& p);

struct BnGrads {
  Tensor input;
  std::vector<double> gamma;
  std::vector<double> beta;
};
BnGrads batch_norm_backward(const Tensor& grad_out, const BnCache& cache, const BNParams& p);

}  // namespace mognet

#endif  // MOGNET_TENSOR_HPP_
