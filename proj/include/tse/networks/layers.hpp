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

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "tse/autodiff/conv.hpp"
#include "tse/autodiff/ops.hpp"
#include "tse/rng.hpp"

namespace tse::networks {

using ad::Tensor;

template <typename T>
using NamedTensors = std::vector<std::pair<std::string, Tensor<T>>>;

template <typename T>
void fill_uniform(const Tensor<T>& t, double bound, Rng& rng) {
  for (T& v : t.mutable_data()) v = static_cast<T>(rng.uniform(-bound, bound));
}

template <typename T>
struct Linear {
  Tensor<T> weight;  // out × in
  Tensor<T> bias;    // out

  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng)
      : weight(Tensor<T>::zeros({out, in}, true)), bias(Tensor<T>::zeros({out}, true)) {
    fill_uniform(weight, 1.0 / std::sqrt(static_cast<double>(in)), rng);
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return ad::linear(x, weight, bias); }

  void collect(const std::string& prefix, NamedTensors<T>& out) const {
    out.emplace_back(prefix + ".weight", weight);
    out.emplace_back(prefix + ".bias", bias);
  }
};

// Convolution (no bias; the following batch norm supplies the shift),
// batch normalization and ReLU.
template <typename T>
struct ConvBlock {
  Tensor<T> kernel;  // out × in × kh × kw
  Tensor<T> gamma;
  Tensor<T> beta;
  ad::BatchNormStats stats;
  ad::Dilation dilation;

  ConvBlock() = default;
  ConvBlock(std::size_t in, std::size_t out, std::size_t kh, std::size_t kw, ad::Dilation dil,
            Rng& rng)
      : kernel(Tensor<T>::zeros({out, in, kh, kw}, true)),
        gamma(Tensor<T>::full({out}, T(1), true)),
        beta(Tensor<T>::zeros({out}, true)),
        stats(out),
        dilation(dil) {
    fill_uniform(kernel, 1.0 / std::sqrt(static_cast<double>(in * kh * kw)), rng);
  }

  Tensor<T> operator()(const Tensor<T>& x, bool training) {
    return ad::relu(ad::batch_norm2d(ad::conv2d(x, kernel, dilation), gamma, beta, stats, training));
  }

  void collect(const std::string& prefix, NamedTensors<T>& out) const {
    out.emplace_back(prefix + ".kernel", kernel);
    out.emplace_back(prefix + ".bn.gamma", gamma);
    out.emplace_back(prefix + ".bn.beta", beta);
  }
};

}  // namespace tse::networks
