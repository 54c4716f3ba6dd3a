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

// Adam with global-norm gradient clipping. Moments are kept in double
// regardless of the parameter scalar type.

#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "tse/autodiff/tensor.hpp"
#include "tse/errors.hpp"

namespace tse::train {

struct AdamConfig {
  double learning_rate = 0.0002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct ClipResult {
  double norm = 0.0;          // before clipping
  double clipped_norm = 0.0;  // after clipping
};

// Global L2 norm of the gradients (absent gradients count as zero).
template <typename T>
double global_grad_norm(const std::vector<ad::Tensor<T>>& params) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p.has_grad()) continue;
    for (T g : p.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  return std::sqrt(sq);
}

// Rescales all gradients so that their global norm is at most max_norm.
template <typename T>
ClipResult clip_grad_norm(const std::vector<ad::Tensor<T>>& params, double max_norm) {
  ClipResult r;
  r.norm = global_grad_norm(params);
  if (!std::isfinite(r.norm)) throw NumericalError("gradient norm is not finite");
  r.clipped_norm = r.norm;
  if (r.norm > max_norm) {
    const double factor = max_norm / r.norm;
    for (const auto& p : params) {
      if (!p.has_grad()) continue;
      for (T& g : p.mutable_grad()) g = static_cast<T>(static_cast<double>(g) * factor);
    }
    r.clipped_norm = global_grad_norm(params);
  }
  return r;
}

template <typename T>
class Adam {
 public:
  Adam(std::vector<ad::Tensor<T>> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (const auto& p : params_) {
      m_.emplace_back(p.numel(), 0.0);
      v_.emplace_back(p.numel(), 0.0);
    }
  }

  const std::vector<ad::Tensor<T>>& params() const { return params_; }
  std::size_t steps() const { return t_; }

  void zero_grad() {
    for (const auto& p : params_) p.zero_grad();
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const auto& p = params_[i];
      if (!p.has_grad()) continue;
      const auto g = p.grad();
      auto x = p.mutable_data();
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t k = 0; k < x.size(); ++k) {
        const double gk = static_cast<double>(g[k]);
        m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * gk;
        v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * gk * gk;
        const double update = cfg_.learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg_.epsilon);
        x[k] = static_cast<T>(static_cast<double>(x[k]) - update);
      }
    }
  }

 private:
  std::vector<ad::Tensor<T>> params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace tse::train
