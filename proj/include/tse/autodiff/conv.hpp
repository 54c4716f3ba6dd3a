// Copyright 2026 The tse Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Dilated 2-D convolution and per-channel batch normalization over
// N×C×H×W tensors.

#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "tse/autodiff/ops.hpp"
#include "tse/autodiff/tensor.hpp"

namespace tse::ad {

struct Dilation {
  std::size_t rows = 1;
  std::size_t cols = 1;
};

// Effective extent of a dilated kernel along one axis.
constexpr std::size_t dilated_extent(std::size_t kernel, std::size_t dilation) {
  return kernel + (kernel - 1) * (dilation - 1);
}

namespace detail {

// Calls fn(dy, dx, y0, y1, x0, x1) for one kernel tap: the input offset of
// the tap and the output rectangle whose shifted input stays in bounds.
template <typename F>
void for_tap(std::ptrdiff_t dy, std::ptrdiff_t dx, std::size_t h, std::size_t w, F fn) {
  const auto H = static_cast<std::ptrdiff_t>(h);
  const auto W = static_cast<std::ptrdiff_t>(w);
  const std::ptrdiff_t y0 = std::max<std::ptrdiff_t>(0, -dy);
  const std::ptrdiff_t y1 = std::min<std::ptrdiff_t>(H, H - dy);
  const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
  const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(W, W - dx);
  if (y0 >= y1 || x0 >= x1) return;
  fn(y0, y1, x0, x1);
}

}  // namespace detail

// Cross-correlation with "same" zero padding:
//   out[n,o,y,x] = sum_{c,i,j} k[o,c,i,j] * in[n,c, y+(i-ci)*dr, x+(j-cj)*dc]
// where (ci, cj) is the kernel center. Kernel sizes must be odd. Rank-3
// input is treated as a batch of one and produces rank-3 output.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, Dilation dilation = {}) {
  const bool unbatched = input.rank() == 3;
  if (!unbatched && input.rank() != 4) {
    throw DimensionError("conv2d: input must be C×H×W or N×C×H×W, got " +
                         shape_string(input.shape()));
  }
  detail::require_rank(kernel.shape(), 4, "conv2d");
  const std::size_t n = unbatched ? 1 : input.dim(0);
  const std::size_t cin = input.dim(unbatched ? 0 : 1);
  const std::size_t h = input.dim(unbatched ? 1 : 2);
  const std::size_t w = input.dim(unbatched ? 2 : 3);
  const std::size_t cout = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kernel.dim(1) != cin) {
    throw DimensionError("conv2d: kernel " + shape_string(kernel.shape()) +
                         " expects " + std::to_string(kernel.dim(1)) +
                         " input channels, input " + shape_string(input.shape()) +
                         " has " + std::to_string(cin));
  }
  if (kh % 2 == 0 || kw % 2 == 0 || dilation.rows == 0 || dilation.cols == 0) {
    throw DimensionError("conv2d: kernel sizes must be odd and dilation positive");
  }
  const std::size_t plane = h * w;
  const auto ch = static_cast<std::ptrdiff_t>(kh / 2);
  const auto cw = static_cast<std::ptrdiff_t>(kw / 2);
  const auto dr = static_cast<std::ptrdiff_t>(dilation.rows);
  const auto dc = static_cast<std::ptrdiff_t>(dilation.cols);

  std::vector<T> out(n * cout * plane, T(0));
  const T* in = input.data().data();
  const T* kv = kernel.data().data();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t o = 0; o < cout; ++o) {
      T* dst = out.data() + (b * cout + o) * plane;
      for (std::size_t c = 0; c < cin; ++c) {
        const T* src = in + (b * cin + c) * plane;
        for (std::size_t i = 0; i < kh; ++i)
          for (std::size_t j = 0; j < kw; ++j) {
            const T wt = kv[((o * cin + c) * kh + i) * kw + j];
            if (wt == T(0)) continue;
            const std::ptrdiff_t dy = (static_cast<std::ptrdiff_t>(i) - ch) * dr;
            const std::ptrdiff_t dx = (static_cast<std::ptrdiff_t>(j) - cw) * dc;
            detail::for_tap(dy, dx, h, w, [&](auto y0, auto y1, auto x0, auto x1) {
              const auto len = x1 - x0;
              for (auto y = y0; y < y1; ++y) {
                detail::MapVec<T>(dst + y * w + x0, len) +=
                    wt * detail::CMapVec<T>(src + (y + dy) * w + x0 + dx, len);
              }
            });
          }
      }
    }

  Shape out_shape = unbatched ? Shape{cout, h, w} : Shape{n, cout, h, w};
  return make_result<T>(std::move(out_shape), std::move(out), {input, kernel},
                        [=](Node<T>& self) {
    T* gin = parent_grad(self, 0);
    T* gk = parent_grad(self, 1);
    const T* in = parent_value(self, 0);
    const T* kv = parent_value(self, 1);
    const T* g = self.grad.data();
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t o = 0; o < cout; ++o) {
        const T* go = g + (b * cout + o) * plane;
        for (std::size_t c = 0; c < cin; ++c) {
          const T* src = in + (b * cin + c) * plane;
          T* gsrc = gin ? gin + (b * cin + c) * plane : nullptr;
          for (std::size_t i = 0; i < kh; ++i)
            for (std::size_t j = 0; j < kw; ++j) {
              const std::size_t kidx = ((o * cin + c) * kh + i) * kw + j;
              const T wt = kv[kidx];
              const std::ptrdiff_t dy = (static_cast<std::ptrdiff_t>(i) - ch) * dr;
              const std::ptrdiff_t dx = (static_cast<std::ptrdiff_t>(j) - cw) * dc;
              detail::for_tap(dy, dx, h, w, [&](auto y0, auto y1, auto x0, auto x1) {
                const auto len = x1 - x0;
                T acc = T(0);
                for (auto y = y0; y < y1; ++y) {
                  detail::CMapVec<T> grow(go + y * w + x0, len);
                  if (gk) acc += grow.dot(detail::CMapVec<T>(src + (y + dy) * w + x0 + dx, len));
                  if (gsrc && wt != T(0)) {
                    detail::MapVec<T>(gsrc + (y + dy) * w + x0 + dx, len) += wt * grow;
                  }
                }
                if (gk) gk[kidx] += acc;
              });
            }
        }
      }
  });
}

// Running statistics owned by a batch-norm layer; updated on every training
// forward pass as running = momentum * running + (1 - momentum) * batch.
struct BatchNormStats {
  std::vector<double> mean;
  std::vector<double> var;

  explicit BatchNormStats(std::size_t channels = 0)
      : mean(channels, 0.0), var(channels, 1.0) {}
};

// Per-channel normalization over (N, H, W) of an N×C×H×W tensor. Training
// mode normalizes with batch statistics (biased variance); evaluation mode
// with the running statistics.
template <typename T>
Tensor<T> batch_norm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                       BatchNormStats& stats, bool training, double momentum = 0.9,
                       double eps = 1e-5) {
  detail::require_rank(x.shape(), 4, "batch_norm2d");
  const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  if (gamma.numel() != c || beta.numel() != c || stats.mean.size() != c) {
    throw DimensionError("batch_norm2d: parameters do not match " +
                         std::to_string(c) + " channels");
  }
  const auto xv = x.data();
  const auto gv = gamma.data();
  const auto bv = beta.data();
  const double count = static_cast<double>(n * plane);

  std::vector<double> mu(c), inv_std(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    if (training) {
      double s = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const T* p = xv.data() + (b * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) s += static_cast<double>(p[i]);
      }
      const double m = s / count;
      double ss = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const T* p = xv.data() + (b * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = static_cast<double>(p[i]) - m;
          ss += d * d;
        }
      }
      const double v = ss / count;
      mu[ch] = m;
      inv_std[ch] = 1.0 / std::sqrt(v + eps);
      stats.mean[ch] = momentum * stats.mean[ch] + (1.0 - momentum) * m;
      stats.var[ch] = momentum * stats.var[ch] + (1.0 - momentum) * v;
    } else {
      mu[ch] = stats.mean[ch];
      inv_std[ch] = 1.0 / std::sqrt(stats.var[ch] + eps);
    }
  }

  auto xhat = std::make_shared<std::vector<T>>(xv.size());
  std::vector<T> out(xv.size());
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t off = (b * c + ch) * plane;
      const T m = static_cast<T>(mu[ch]);
      const T is = static_cast<T>(inv_std[ch]);
      for (std::size_t i = 0; i < plane; ++i) {
        const T xh = (xv[off + i] - m) * is;
        (*xhat)[off + i] = xh;
        out[off + i] = gv[ch] * xh + bv[ch];
      }
    }

  return make_result<T>(x.shape(), std::move(out), {x, gamma, beta},
                        [=](Node<T>& self) {
    const T* g = self.grad.data();
    const T* gam = parent_value(self, 1);
    T* gx = parent_grad(self, 0);
    T* gg = parent_grad(self, 1);
    T* gb = parent_grad(self, 2);
    for (std::size_t ch = 0; ch < c; ++ch) {
      double sum_g = 0.0, sum_gx = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const std::size_t off = (b * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          sum_g += static_cast<double>(g[off + i]);
          sum_gx += static_cast<double>(g[off + i]) * static_cast<double>((*xhat)[off + i]);
        }
      }
      if (gg) gg[ch] += static_cast<T>(sum_gx);
      if (gb) gb[ch] += static_cast<T>(sum_g);
      if (!gx) continue;
      const double scale_ch = static_cast<double>(gam[ch]) * inv_std[ch];
      for (std::size_t b = 0; b < n; ++b) {
        const std::size_t off = (b * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          if (training) {
            const double d = static_cast<double>(g[off + i]) - sum_g / count -
                             static_cast<double>((*xhat)[off + i]) * sum_gx / count;
            gx[off + i] += static_cast<T>(scale_ch * d);
          } else {
            gx[off + i] += static_cast<T>(scale_ch * static_cast<double>(g[off + i]));
          }
        }
      }
    }
  });
}

}  // namespace tse::ad
