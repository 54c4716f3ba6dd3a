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

// Differentiable tensor operations. Shapes must agree exactly; the only
// implicit broadcast is scalar-with-tensor in the elementwise operations.

#pragma once

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "tse/autodiff/tensor.hpp"

namespace tse::ad {

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <typename T>
using MapVec = Eigen::Map<Vec<T>>;
template <typename T>
using CMapVec = Eigen::Map<const Vec<T>>;

inline void require_rank(const Shape& s, std::size_t rank, const char* op) {
  if (s.size() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " +
                         std::to_string(rank) + ", got shape " +
                         shape_string(s));
  }
}

inline void require_same(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_string(a) + " vs " + shape_string(b));
  }
}

template <typename T, typename F, typename DF>
Tensor<T> unary(const Tensor<T>& x, F f, DF df_from_xy) {
  const auto& xv = x.values();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  return make_result<T>(x.shape(), std::move(out), {x}, [df_from_xy](Node<T>& self) {
    T* gx = parent_grad(self, 0);
    if (!gx) return;
    const T* xv = parent_value(self, 0);
    const std::size_t n = self.value.size();
    for (std::size_t i = 0; i < n; ++i) {
      gx[i] += self.grad[i] * df_from_xy(xv[i], self.value[i]);
    }
  });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_rank(a.shape(), 2, "matmul");
  detail::require_rank(b.shape(), 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions disagree, " +
                         shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  std::vector<T> out(m * n);
  detail::MapMat<T>(out.data(), m, n).noalias() =
      detail::CMapMat<T>(a.data().data(), m, k) *
      detail::CMapMat<T>(b.data().data(), k, n);
  return make_result<T>({m, n}, std::move(out), {a, b}, [m, k, n](Node<T>& self) {
    detail::CMapMat<T> g(self.grad.data(), m, n);
    if (T* ga = parent_grad(self, 0)) {
      detail::MapMat<T>(ga, m, k).noalias() +=
          g * detail::CMapMat<T>(parent_value(self, 1), k, n).transpose();
    }
    if (T* gb = parent_grad(self, 1)) {
      detail::MapMat<T>(gb, k, n).noalias() +=
          detail::CMapMat<T>(parent_value(self, 0), m, k).transpose() * g;
    }
  });
}

// x · W[:, col_offset : col_offset + x.cols]ᵀ for x of shape n×d and W of
// shape h×D. Lets a gate weight act on one block of a concatenated input
// without materializing the concatenation.
template <typename T>
Tensor<T> matmul_cols_t(const Tensor<T>& x, const Tensor<T>& w,
                        std::size_t col_offset) {
  detail::require_rank(x.shape(), 2, "matmul_cols_t");
  detail::require_rank(w.shape(), 2, "matmul_cols_t");
  const std::size_t n = x.dim(0), d = x.dim(1), h = w.dim(0), big_d = w.dim(1);
  if (col_offset + d > big_d) {
    throw DimensionError("matmul_cols_t: input " + shape_string(x.shape()) +
                         " at column offset " + std::to_string(col_offset) +
                         " exceeds weight " + shape_string(w.shape()));
  }
  std::vector<T> out(n * h);
  detail::CMapMat<T> wm(w.data().data(), h, big_d);
  detail::MapMat<T>(out.data(), n, h).noalias() =
      detail::CMapMat<T>(x.data().data(), n, d) *
      wm.middleCols(col_offset, d).transpose();
  return make_result<T>(
      {n, h}, std::move(out), {x, w}, [n, d, h, big_d, col_offset](Node<T>& self) {
        detail::CMapMat<T> g(self.grad.data(), n, h);
        if (T* gx = parent_grad(self, 0)) {
          detail::CMapMat<T> wm(parent_value(self, 1), h, big_d);
          detail::MapMat<T>(gx, n, d).noalias() += g * wm.middleCols(col_offset, d);
        }
        if (T* gw = parent_grad(self, 1)) {
          detail::MapMat<T>(gw, h, big_d).middleCols(col_offset, d).noalias() +=
              g.transpose() * detail::CMapMat<T>(parent_value(self, 0), n, d);
        }
      });
}

// x · Wᵀ over the full weight width.
template <typename T>
Tensor<T> matmul_t(const Tensor<T>& x, const Tensor<T>& w) {
  detail::require_rank(w.shape(), 2, "matmul_t");
  detail::require_rank(x.shape(), 2, "matmul_t");
  if (x.dim(1) != w.dim(1)) {
    throw DimensionError("matmul_t: input " + shape_string(x.shape()) +
                         " does not match weight " + shape_string(w.shape()));
  }
  return matmul_cols_t(x, w, 0);
}

// Adds a bias vector of length h to every row of an n×h matrix.
template <typename T>
Tensor<T> add_row(const Tensor<T>& x, const Tensor<T>& bias) {
  detail::require_rank(x.shape(), 2, "add_row");
  const std::size_t n = x.dim(0), h = x.dim(1);
  if (bias.numel() != h) {
    throw DimensionError("add_row: bias " + shape_string(bias.shape()) +
                         " does not match rows of " + shape_string(x.shape()));
  }
  std::vector<T> out(x.values());
  const auto b = bias.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < h; ++j) out[i * h + j] += b[j];
  return make_result<T>(x.shape(), std::move(out), {x, bias}, [n, h](Node<T>& self) {
    if (T* gx = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < n * h; ++i) gx[i] += self.grad[i];
    }
    if (T* gb = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < h; ++j) gb[j] += self.grad[i * h + j];
    }
  });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
  return add_row(matmul_t(x, w), bias);
}

// ---------------------------------------------------------------------------
// Elementwise

enum class BinaryOp { kAdd, kSub, kMul };

template <typename T>
Tensor<T> elementwise(const Tensor<T>& a, const Tensor<T>& b, BinaryOp op) {
  const bool a_scalar = a.numel() == 1 && b.numel() != 1;
  const bool b_scalar = b.numel() == 1 && a.numel() != 1;
  if (!a_scalar && !b_scalar) detail::require_same(a.shape(), b.shape(), "elementwise");
  const Shape shape = a_scalar ? b.shape() : a.shape();
  const std::size_t n = shape_numel(shape);
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const T x = av[a_scalar ? 0 : i];
    const T y = bv[b_scalar ? 0 : i];
    switch (op) {
      case BinaryOp::kAdd: out[i] = x + y; break;
      case BinaryOp::kSub: out[i] = x - y; break;
      case BinaryOp::kMul: out[i] = x * y; break;
    }
  }
  return make_result<T>(shape, std::move(out), {a, b},
                        [n, a_scalar, b_scalar, op](Node<T>& self) {
    const T* av = parent_value(self, 0);
    const T* bv = parent_value(self, 1);
    const T* g = self.grad.data();
    if (T* ga = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < n; ++i) {
        const T d = op == BinaryOp::kMul ? bv[b_scalar ? 0 : i] : T(1);
        ga[a_scalar ? 0 : i] += g[i] * d;
      }
    }
    if (T* gb = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < n; ++i) {
        const T d = op == BinaryOp::kMul   ? av[a_scalar ? 0 : i]
                    : op == BinaryOp::kSub ? T(-1)
                                           : T(1);
        gb[b_scalar ? 0 : i] += g[i] * d;
      }
    }
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(a, b, BinaryOp::kAdd);
}
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(a, b, BinaryOp::kSub);
}
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(a, b, BinaryOp::kMul);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  return detail::unary(
      x, [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
T sigmoid_value(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return detail::unary(
      x, [](T v) { return sigmoid_value(v); }, [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> tanh_op(const Tensor<T>& x) {
  return detail::unary(
      x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  if (branch_fingerprint_slot() != nullptr) {
    for (T v : x.data()) record_branch(v > T(0));
  }
  return detail::unary(
      x, [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
  return detail::unary(
      x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = T(0);
  for (T v : x.data()) total += v;
  return make_result<T>({1}, {total}, {x}, [](Node<T>& self) {
    if (T* gx = parent_grad(self, 0)) {
      const std::size_t n = self.parents[0]->value.size();
      for (std::size_t i = 0; i < n; ++i) gx[i] += self.grad[0];
    }
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

// ---------------------------------------------------------------------------
// Layout

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_string(x.shape()) +
                         " as " + shape_string(shape));
  }
  return make_result<T>(std::move(shape), x.values(), {x}, [](Node<T>& self) {
    if (T* gx = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
    }
  });
}

// General axis permutation: output axis i is input axis perm[i].
template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& perm) {
  const Shape& in = x.shape();
  const std::size_t rank = in.size();
  if (perm.size() != rank) {
    throw DimensionError("permute: permutation length does not match rank of " +
                         shape_string(in));
  }
  std::vector<bool> seen(rank, false);
  for (std::size_t p : perm) {
    if (p >= rank || seen[p]) throw DimensionError("permute: invalid permutation");
    seen[p] = true;
  }
  Shape out_shape(rank);
  std::vector<std::size_t> in_stride(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_stride[i - 1] = in_stride[i] * in[i];
  std::vector<std::size_t> src_stride(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = in[perm[i]];
    src_stride[i] = in_stride[perm[i]];
  }
  const std::size_t n = x.numel();
  // index map: output offset -> input offset
  auto index = std::make_shared<std::vector<std::size_t>>(n);
  std::vector<std::size_t> counter(rank, 0);
  std::size_t src = 0;
  for (std::size_t o = 0; o < n; ++o) {
    (*index)[o] = src;
    for (std::size_t ax = rank; ax-- > 0;) {
      if (++counter[ax] < out_shape[ax]) {
        src += src_stride[ax];
        break;
      }
      src -= src_stride[ax] * (out_shape[ax] - 1);
      counter[ax] = 0;
    }
  }
  std::vector<T> out(n);
  const auto xv = x.data();
  for (std::size_t o = 0; o < n; ++o) out[o] = xv[(*index)[o]];
  return make_result<T>(std::move(out_shape), std::move(out), {x}, [index](Node<T>& self) {
    if (T* gx = parent_grad(self, 0)) {
      for (std::size_t o = 0; o < index->size(); ++o) gx[(*index)[o]] += self.grad[o];
    }
  });
}

// Rows [start, start + count) of a rank-2 tensor.
template <typename T>
Tensor<T> slice_rows(const Tensor<T>& x, std::size_t start, std::size_t count) {
  detail::require_rank(x.shape(), 2, "slice_rows");
  const std::size_t cols = x.dim(1);
  if (start + count > x.dim(0)) {
    throw DimensionError("slice_rows: range exceeds " + shape_string(x.shape()));
  }
  const auto xv = x.data();
  std::vector<T> out(xv.begin() + static_cast<std::ptrdiff_t>(start * cols),
                     xv.begin() + static_cast<std::ptrdiff_t>((start + count) * cols));
  return make_result<T>({count, cols}, std::move(out), {x}, [start, cols](Node<T>& self) {
    if (T* gx = parent_grad(self, 0)) {
      T* dst = gx + start * cols;
      for (std::size_t i = 0; i < self.grad.size(); ++i) dst[i] += self.grad[i];
    }
  });
}

// Stacks rank-2 tensors with equal column count along rows.
template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t cols = parts[0].dim(1);
  std::size_t rows = 0;
  for (const auto& p : parts) {
    detail::require_rank(p.shape(), 2, "concat_rows");
    if (p.dim(1) != cols) {
      throw DimensionError("concat_rows: column mismatch " +
                           shape_string(parts[0].shape()) + " vs " +
                           shape_string(p.shape()));
    }
    rows += p.dim(0);
  }
  std::vector<T> out;
  out.reserve(rows * cols);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return make_result<T>({rows, cols}, std::move(out), parts, [](Node<T>& self) {
    std::size_t offset = 0;
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      const std::size_t len = self.parents[i]->value.size();
      if (T* g = parent_grad(self, i)) {
        for (std::size_t j = 0; j < len; ++j) g[j] += self.grad[offset + j];
      }
      offset += len;
    }
  });
}

// Joins rank-2 tensors with equal row count along columns.
template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t rows = parts[0].dim(0);
  std::size_t cols = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    detail::require_rank(p.shape(), 2, "concat_cols");
    if (p.dim(0) != rows) {
      throw DimensionError("concat_cols: row mismatch " +
                           shape_string(parts[0].shape()) + " vs " +
                           shape_string(p.shape()));
    }
    widths.push_back(p.dim(1));
    cols += p.dim(1);
  }
  std::vector<T> out(rows * cols);
  std::size_t c0 = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto pv = parts[k].data();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < widths[k]; ++j)
        out[i * cols + c0 + j] = pv[i * widths[k] + j];
    c0 += widths[k];
  }
  return make_result<T>({rows, cols}, std::move(out), parts,
                        [rows, cols, widths](Node<T>& self) {
    std::size_t c0 = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      if (T* g = parent_grad(self, k)) {
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < widths[k]; ++j)
            g[i * widths[k] + j] += self.grad[i * cols + c0 + j];
      }
      c0 += widths[k];
    }
  });
}

// ---------------------------------------------------------------------------
// Normalization and classification heads

// Each row scaled to unit Euclidean norm.
template <typename T>
Tensor<T> l2_normalize_rows(const Tensor<T>& x, T eps = T(1e-12)) {
  detail::require_rank(x.shape(), 2, "l2_normalize_rows");
  const std::size_t n = x.dim(0), d = x.dim(1);
  auto norms = std::make_shared<std::vector<T>>(n);
  std::vector<T> out(x.values());
  for (std::size_t i = 0; i < n; ++i) {
    T ss = T(0);
    for (std::size_t j = 0; j < d; ++j) ss += out[i * d + j] * out[i * d + j];
    const T norm = std::sqrt(ss) + eps;
    (*norms)[i] = norm;
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] /= norm;
  }
  return make_result<T>(x.shape(), std::move(out), {x}, [n, d, norms](Node<T>& self) {
    T* gx = parent_grad(self, 0);
    if (!gx) return;
    for (std::size_t i = 0; i < n; ++i) {
      const T* y = self.value.data() + i * d;
      const T* g = self.grad.data() + i * d;
      T yg = T(0);
      for (std::size_t j = 0; j < d; ++j) yg += y[j] * g[j];
      for (std::size_t j = 0; j < d; ++j) gx[i * d + j] += (g[j] - y[j] * yg) / (*norms)[i];
    }
  });
}

// Mean softmax cross-entropy of n×K logits against integer class labels.
template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels) {
  detail::require_rank(logits.shape(), 2, "softmax_cross_entropy");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(n) + " rows");
  }
  auto probs = std::make_shared<std::vector<T>>(n * k);
  const auto lv = logits.data();
  T loss = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
      throw DimensionError("softmax_cross_entropy: label out of range");
    }
    T mx = lv[i * k];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, lv[i * k + j]);
    T z = T(0);
    for (std::size_t j = 0; j < k; ++j) {
      const T e = std::exp(lv[i * k + j] - mx);
      (*probs)[i * k + j] = e;
      z += e;
    }
    for (std::size_t j = 0; j < k; ++j) (*probs)[i * k + j] /= z;
    loss -= std::log((*probs)[i * k + static_cast<std::size_t>(labels[i])]);
  }
  loss /= static_cast<T>(n);
  return make_result<T>({1}, {loss}, {logits}, [n, k, probs, labels](Node<T>& self) {
    T* g = parent_grad(self, 0);
    if (!g) return;
    const T up = self.grad[0] / static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < k; ++j) {
        const T onehot = static_cast<std::size_t>(labels[i]) == j ? T(1) : T(0);
        g[i * k + j] += up * ((*probs)[i * k + j] - onehot);
      }
  });
}

}  // namespace tse::ad
