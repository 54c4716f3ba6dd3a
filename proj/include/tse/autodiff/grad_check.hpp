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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "tse/autodiff/tensor.hpp"

namespace tse::ad {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  // Norm-wise error ||a - n|| / max(||a||, ||n||), maximized over tensors.
  // Unlike the elementwise figure it is not dominated by entries whose
  // magnitude is below the resolution of the finite difference.
  double max_tensor_rel_error = 0.0;
  std::size_t worst_tensor = 0;
};

// Compares reverse-mode gradients of a scalar function against central
// differences over every element of every parameter. The relative error of
// one element is |a - n| / max(|a|, |n|, 1e-8).
//
// `loss` must rebuild its graph from the current parameter values on every
// call. `corrupt` optionally perturbs the analytic gradients before the
// comparison (used as a negative control).
namespace detail {

struct Probe {
  double value;
  std::uint64_t branches;
};

inline Probe probe(const std::function<Tensor<double>()>& loss) {
  BranchRecorder rec;
  const double v = loss().item();
  return {v, rec.value()};
}

}  // namespace detail

// Compares reverse-mode gradients of a scalar loss with central differences.
// The numeric derivative combines steps h and h/2 (Richardson), so the
// truncation error is fourth order. When a perturbation changes the set of
// active ReLU branches the difference would straddle a kink, and the step is
// shrunk until both sides stay on the piece that contains the point.
// Relative error per element is |a - n| / max(|a|, |n|, 1e-8); the per-tensor
// figure is reported alongside it.
inline GradCheckResult grad_check_detailed(
    const std::function<Tensor<double>()>& loss, const std::vector<Tensor<double>>& params,
    double eps = 1e-5,
    const std::function<void(std::vector<std::vector<double>>&)>& corrupt = {}) {
  for (const auto& p : params) p.zero_grad();
  std::uint64_t base_branches = 0;
  {
    BranchRecorder rec;
    loss().backward();
    base_branches = rec.value();
  }
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.emplace_back(p.grad().begin(), p.grad().end());
  if (corrupt) corrupt(analytic);

  GradCheckResult result;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto values = params[k].mutable_data();
    double diff_sq = 0.0, a_sq = 0.0, n_sq = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      auto central = [&](double h, bool& smooth) {
        values[i] = saved + h;
        const auto up = detail::probe(loss);
        values[i] = saved - h;
        const auto down = detail::probe(loss);
        values[i] = saved;
        smooth = smooth && up.branches == base_branches && down.branches == base_branches;
        return (up.value - down.value) / (2.0 * h);
      };
      double h = eps;
      double numeric = 0.0;
      for (int attempt = 0; attempt < 4; ++attempt, h *= 0.1) {
        bool smooth = true;
        const double coarse = central(h, smooth);
        const double fine = central(0.5 * h, smooth);
        numeric = (4.0 * fine - coarse) / 3.0;
        if (smooth) break;
      }
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      diff_sq += (a - numeric) * (a - numeric);
      a_sq += a * a;
      n_sq += numeric * numeric;
      ++result.checked;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_param = k;
        result.worst_index = i;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
    const double scale = std::sqrt(std::max({a_sq, n_sq}));
    const double tensor_rel = scale > 0.0 ? std::sqrt(diff_sq) / scale : 0.0;
    if (tensor_rel > result.max_tensor_rel_error) {
      result.max_tensor_rel_error = tensor_rel;
      result.worst_tensor = k;
    }
  }
  for (const auto& p : params) p.zero_grad();
  return result;
}

inline double grad_check(const std::function<Tensor<double>()>& loss,
                         const std::vector<Tensor<double>>& params, double eps = 1e-5) {
  return grad_check_detailed(loss, params, eps).max_rel_error;
}

}  // namespace tse::ad
