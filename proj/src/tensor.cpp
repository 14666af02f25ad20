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

#include "mognet/tensor.hpp"

#include <atomic>
#include <thread>

namespace mognet {

std::string Shape4::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
         std::to_string(w) + ")";
}

void parallel_for(int count, const std::function<void(int)>& fn) {
  static const int workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  const int threads = std::min(workers, count);
  if (threads <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(threads - 1);
  auto work = [&] {
    for (int i = next++; i < count; i = next++) fn(i);
  };
  for (int t = 1; t < threads; ++t) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
}

namespace {

struct ConvGeometry {
  int in_per_group;
  int out_per_group;
  AxisGeometry gy;
  AxisGeometry gx;
};

ConvGeometry conv_geometry(const Shape4& in, const Shape4& weight, int groups, Padding padding,
                           int stride) {
  if (groups <= 0 || in.c % groups != 0 || weight.n % groups != 0) {
    throw ConfigError("groups=" + std::to_string(groups) + " does not divide channel counts");
  }
  ConvGeometry g{in.c / groups, weight.n / groups, axis_geometry(in.h, weight.h, stride, padding),
                 axis_geometry(in.w, weight.w, stride, padding)};
  if (weight.c != g.in_per_group) throw ShapeError("weight/input channel mismatch");
  return g;
}

}  // namespace

Tensor conv2d_backward_input(const Tensor& grad_out, const Tensor& weight, int groups,
                             Padding padding, int stride, const Shape4& input_shape) {
  const ConvGeometry geo = conv_geometry(input_shape, weight.shape(), groups, padding, stride);
  if (grad_out.n() != input_shape.n || grad_out.c() != weight.n() || grad_out.h() != geo.gy.out ||
      grad_out.w() != geo.gx.out) {
    throw ShapeError("conv2d_backward_input: gradient shape " + grad_out.shape().str());
  }
  Tensor dx(input_shape);
  const int in_w = input_shape.w;
  parallel_for(input_shape.n, [&](int b) {
    for (int ic = 0; ic < input_shape.c; ++ic) {
      const int g = ic / geo.in_per_group;
      const int icg = ic % geo.in_per_group;
      double* dst = dx.plane(b, ic);
      for (int ocg = 0; ocg < geo.out_per_group; ++ocg) {
        const int oc = g * geo.out_per_group + ocg;
        const double* src = grad_out.plane(b, oc);
        for (int ky = 0; ky < weight.h(); ++ky) {
          for (int kx = 0; kx < weight.w(); ++kx) {
            const double wv = weight.at(oc, icg, ky, kx);
            if (wv == 0.0) continue;
            for (int oy = 0; oy < geo.gy.out; ++oy) {
              const int iy = oy * stride + ky - geo.gy.pad_before;
              if (iy < 0 || iy >= input_shape.h) continue;
              for (int ox = 0; ox < geo.gx.out; ++ox) {
                const int ix = ox * stride + kx - geo.gx.pad_before;
                if (ix < 0 || ix >= in_w) continue;
                dst[iy * in_w + ix] += src[oy * geo.gx.out + ox] * wv;
              }
            }
          }
        }
      }
    }
  });
  return dx;
}

Tensor conv2d_backward_weight(const Tensor& x, const Tensor& grad_out, const Shape4& weight_shape,
                              int groups, Padding padding, int stride) {
  const ConvGeometry geo = conv_geometry(x.shape(), weight_shape, groups, padding, stride);
  if (grad_out.n() != x.n() || grad_out.c() != weight_shape.n || grad_out.h() != geo.gy.out ||
      grad_out.w() != geo.gx.out) {
    throw ShapeError("conv2d_backward_weight: gradient shape " + grad_out.shape().str());
  }
  Tensor dw(weight_shape);
  // Each output channel owns its weight slice, so the summation order over
  // the batch is fixed regardless of scheduling.
  parallel_for(weight_shape.n, [&](int oc) {
    const int g = oc / geo.out_per_group;
    for (int b = 0; b < x.n(); ++b) {
      const double* dy = grad_out.plane(b, oc);
      for (int icg = 0; icg < geo.in_per_group; ++icg) {
        const double* src = x.plane(b, g * geo.in_per_group + icg);
        for (int ky = 0; ky < weight_shape.h; ++ky) {
          for (int kx = 0; kx < weight_shape.w; ++kx) {
            double acc = 0.0;
            for (int oy = 0; oy < geo.gy.out; ++oy) {
              const int iy = oy * stride + ky - geo.gy.pad_before;
              if (iy < 0 || iy >= x.h()) continue;
              for (int ox = 0; ox < geo.gx.out; ++ox) {
                const int ix = ox * stride + kx - geo.gx.pad_before;
                if (ix < 0 || ix >= x.w()) continue;
                acc += dy[oy * geo.gx.out + ox] * src[iy * x.w() + ix];
              }
            }
            dw.at(oc, icg, ky, kx) += acc;
          }
        }
      }
    }
  });
  return dw;
}

Tensor maxpool2x2_backward(const Tensor& x, const Tensor& grad_out) {
  if (grad_out.n() != x.n() || grad_out.c() != x.c() || grad_out.h() * 2 != x.h() ||
      grad_out.w() * 2 != x.w()) {
    throw ShapeError("maxpool2x2_backward: shape mismatch");
  }
  Tensor dx(x.shape());
  for (int b = 0; b < x.n(); ++b) {
    for (int c = 0; c < x.c(); ++c) {
      for (int y = 0; y < grad_out.h(); ++y) {
        for (int xx = 0; xx < grad_out.w(); ++xx) {
          int by = 2 * y;
          int bx = 2 * xx;
          for (int dy = 0; dy < 2; ++dy) {
            for (int dxx = 0; dxx < 2; ++dxx) {
              if (x.at(b, c, 2 * y + dy, 2 * xx + dxx) > x.at(b, c, by, bx)) {
                by = 2 * y + dy;
                bx = 2 * xx + dxx;
              }
            }
          }
          dx.at(b, c, by, bx) += grad_out.at(b, c, y, xx);
        }
      }
    }
  }
  return dx;
}

Tensor global_avg_pool(const Tensor& x) {
  Tensor out({x.n(), x.c(), 1, 1});
  const std::size_t hw = static_cast<std::size_t>(x.h()) * x.w();
  for (int b = 0; b < x.n(); ++b) {
    for (int c = 0; c < x.c(); ++c) {
      const double* p = x.plane(b, c);
      double sum = 0.0;
      for (std::size_t i = 0; i < hw; ++i) sum += p[i];
      out.at(b, c, 0, 0) = sum / static_cast<double>(hw);
    }
  }
  return out;
}

Tensor global_avg_pool_backward(const Tensor& grad_out, const Shape4& input_shape) {
  if (grad_out.n() != input_shape.n || grad_out.c() != input_shape.c) {
    throw ShapeError("global_avg_pool_backward: shape mismatch");
  }
  Tensor dx(input_shape);
  const std::size_t hw = static_cast<std::size_t>(input_shape.h) * input_shape.w;
  for (int b = 0; b < input_shape.n; ++b) {
    for (int c = 0; c < input_shape.c; ++c) {
      const double g = grad_out.at(b, c, 0, 0) / static_cast<double>(hw);
      double* p = dx.plane(b, c);
      for (std::size_t i = 0; i < hw; ++i) p[i] = g;
    }
  }
  return dx;
}

void BNParams::validate() const {
  const std::size_t c = gamma.size();
  if (beta.size() != c || moving_mean.size() != c || moving_var.size() != c) {
    throw ConfigError("batch norm parameter vectors differ in length");
  }
  if (!(epsilon > 0.0)) throw ConfigError("batch norm epsilon must be positive");
  for (double v : moving_var) {
    if (!(v >= 0.0)) throw ConfigError("batch norm moving variance must be non-negative");
  }
}

void BNParams::round_to_float() {
  auto round_all = [](std::vector<double>& v) {
    for (double& x : v) x = static_cast<double>(static_cast<float>(x));
  };
  round_all(gamma);
  round_all(beta);
  round_all(moving_mean);
  round_all(moving_var);
  epsilon = static_cast<double>(static_cast<float>(epsilon));
}

Tensor batch_norm_inference(const Tensor& x, const BNParams& p) {
  if (x.c() != p.channels()) throw ShapeError("batch_norm: channel count mismatch");
  Tensor y(x.shape());
  const std::size_t hw = static_cast<std::size_t>(x.h()) * x.w();
  for (int c = 0; c < x.c(); ++c) {
    const BnChannel ch = p.channel(c);
    for (int b = 0; b < x.n(); ++b) {
      const double* src = x.plane(b, c);
      double* dst = y.plane(b, c);
      for (std::size_t i = 0; i < hw; ++i) dst[i] = ch.apply(src[i]);
    }
  }
  return y;
}

Tensor batch_norm(const Tensor& x, BNParams& p, bool training, BnCache* cache) {
  if (!training) return batch_norm_inference(x, p);
  if (x.c() != p.channels()) throw ShapeError("batch_norm: channel count mismatch");
  const std::size_t hw = static_cast<std::size_t>(x.h()) * x.w();
  const std::size_t count = hw * static_cast<std::size_t>(x.n());
  if (count == 0) throw ShapeError("batch_norm: empty batch in training mode");

  Tensor y(x.shape());
  Tensor normalized(x.shape());
  std::vector<double> inv_std(x.c());
  for (int c = 0; c < x.c(); ++c) {
    double sum = 0.0;
    for (int b = 0; b < x.n(); ++b) {
      const double* src = x.plane(b, c);
      for (std::size_t i = 0; i < hw; ++i) sum += src[i];
    }
    const double mean = sum / static_cast<double>(count);
    double sq = 0.0;
    for (int b = 0; b < x.n(); ++b) {
      const double* src = x.plane(b, c);
      for (std::size_t i = 0; i < hw; ++i) sq += (src[i] - mean) * (src[i] - mean);
    }
    const double var = sq / static_cast<double>(count);
    inv_std[c] = 1.0 / std::sqrt(var + p.epsilon);
    for (int b = 0; b < x.n(); ++b) {
      const double* src = x.plane(b, c);
      double* nrm = normalized.plane(b, c);
      double* dst = y.plane(b, c);
      for (std::size_t i = 0; i < hw; ++i) {
        nrm[i] = (src[i] - mean) * inv_std[c];
        dst[i] = p.gamma[c] * nrm[i] + p.beta[c];
      }
    }
    p.moving_mean[c] = p.momentum * p.moving_mean[c] + (1.0 - p.momentum) * mean;
    p.moving_var[c] = p.momentum * p.moving_var[c] + (1.0 - p.momentum) * var;
  }
  if (cache != nullptr) {
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

BnGrads batch_norm_backward(const Tensor& grad_out, const BnCache& cache, const BNParams& p) {
  const Tensor& xhat = cache.normalized;
  if (!(grad_out.shape() == xhat.shape())) throw ShapeError("batch_norm_backward: shape mismatch");
  const int channels = xhat.c();
  const std::size_t hw = static_cast<std::size_t>(xhat.h()) * xhat.w();
  const double count = static_cast<double>(hw) * xhat.n();
  BnGrads g{Tensor(xhat.shape()), std::vector<double>(channels, 0.0),
            std::vector<double>(channels, 0.0)};
  for (int c = 0; c < channels; ++c) {
    double sum_dy = 0.0;
    double sum_dy_xhat = 0.0;
    for (int b = 0; b < xhat.n(); ++b) {
      const double* dy = grad_out.plane(b, c);
      const double* xh = xhat.plane(b, c);
      for (std::size_t i = 0; i < hw; ++i) {
        sum_dy += dy[i];
        sum_dy_xhat += dy[i] * xh[i];
      }
    }
    g.beta[c] = sum_dy;
    g.gamma[c] = sum_dy_xhat;
    const double scale = p.gamma[c] * cache.inv_std[c] / count;
    for (int b = 0; b < xhat.n(); ++b) {
      const double* dy = grad_out.plane(b, c);
      const double* xh = xhat.plane(b, c);
      double* dx = g.input.plane(b, c);
      for (std::size_t i = 0; i < hw; ++i) {
        dx[i] = scale * (count * dy[i] - sum_dy - xh[i] * sum_dy_xhat);
      }
    }
  }
  return g;
}

}  // namespace mognet
