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

// CNN-LSTM mask estimator. For a batch of N magnitude spectrograms (N×B×L,
// B bins, L frames) and N target embeddings (N×E):
//
//   r    = conv stack (8 × conv + batch norm + ReLU), flattened per frame
//   h    = LSTM over frames of [r_t, e]
//   mask = sigmoid(FC2(relu(FC1(h))))   (N×B×L, values in (0, 1))
//
// Per-frame features are flattened channel-major: feature c·B + k holds
// channel c at bin k.

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "tse/autodiff/ops.hpp"
#include "tse/cells/lstm.hpp"
#include "tse/networks/config.hpp"
#include "tse/networks/layers.hpp"
#include "tse/rng.hpp"

namespace tse::networks {

template <typename T>
class Separator {
 public:
  Separator(const SeparatorConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    std::size_t in = 1;
    for (std::size_t i = 0; i < cfg_.convs.size(); ++i) {
      const ConvSpec& c = cfg_.convs[i];
      convs_.emplace_back(in, c.filters, c.kernel_rows, c.kernel_cols,
                          ad::Dilation{c.dilation_rows, c.dilation_cols}, rng);
      in = c.filters;
    }
    lstm_ = cells::LstmParams<T>::init(cfg_.wiring, cfg_.lstm_hidden, cfg_.feature_size(),
                                       cfg_.embed_dim, rng);
    fc1_ = Linear<T>(cfg_.lstm_hidden, cfg_.fc1, rng);
    fc2_ = Linear<T>(cfg_.fc1, cfg_.bins, rng);
  }

  const SeparatorConfig& config() const { return cfg_; }
  const cells::LstmParams<T>& lstm() const { return lstm_; }

  // g(|Y|): N×B×L magnitudes → (L·N)×(C·B) per-frame features, time-major.
  Tensor<T> extract_features(const Tensor<T>& mags, bool training) {
    check_input(mags);
    const std::size_t n = mags.dim(0), bins = mags.dim(1), frames = mags.dim(2);
    Tensor<T> x = ad::reshape(mags, {n, 1, bins, frames});
    for (auto& block : convs_) x = block(x, training);
    const std::size_t ch = cfg_.convs.back().filters;
    // N×C×B×L → L×N×C×B
    Tensor<T> framed = ad::permute(x, {3, 0, 1, 2});
    return ad::reshape(framed, {frames * n, ch * bins});
  }

  // phi(r, e): features and embeddings → N×B×L mask.
  Tensor<T> estimate_mask(const Tensor<T>& features, const Tensor<T>& embedding,
                          std::size_t batch) const {
    if (embedding.rank() != 2 || embedding.dim(0) != batch || embedding.dim(1) != cfg_.embed_dim) {
      throw DimensionError("estimate_mask: embedding " + ad::shape_string(embedding.shape()) +
                           " does not match batch " + std::to_string(batch) + " × embed_dim " +
                           std::to_string(cfg_.embed_dim));
    }
    const std::size_t frames = features.dim(0) / batch;
    const auto seq = cells::run_sequence(lstm_, features, embedding, batch);
    Tensor<T> hidden = ad::relu(fc1_(seq.hidden));
    Tensor<T> mask = ad::sigmoid(fc2_(hidden));  // (L·N)×B
    // L×N×B → N×B×L
    return ad::permute(ad::reshape(mask, {frames, batch, cfg_.bins}), {1, 2, 0});
  }

  Tensor<T> forward(const Tensor<T>& mags, const Tensor<T>& embedding, bool training) {
    return estimate_mask(extract_features(mags, training), embedding, mags.dim(0));
  }

  NamedTensors<T> parameters() const {
    NamedTensors<T> out;
    for (std::size_t i = 0; i < convs_.size(); ++i) convs_[i].collect("conv" + std::to_string(i + 1), out);
    for (auto& [name, t] : lstm_.named()) out.emplace_back("lstm." + name, t);
    fc1_.collect("fc1", out);
    fc2_.collect("fc2", out);
    return out;
  }

  std::vector<ad::BatchNormStats*> batch_norm_stats() {
    std::vector<ad::BatchNormStats*> out;
    for (auto& c : convs_) out.push_back(&c.stats);
    return out;
  }
  std::vector<const ad::BatchNormStats*> batch_norm_stats() const {
    std::vector<const ad::BatchNormStats*> out;
    for (auto& c : convs_) out.push_back(&c.stats);
    return out;
  }

 private:
  void check_input(const Tensor<T>& mags) const {
    if (mags.rank() != 3 || mags.dim(1) != cfg_.bins) {
      throw DimensionError("separator expects N×" + std::to_string(cfg_.bins) +
                           "×frames magnitudes, got " + ad::shape_string(mags.shape()));
    }
  }

  SeparatorConfig cfg_;
  std::vector<ConvBlock<T>> convs_;
  cells::LstmParams<T> lstm_;
  Linear<T> fc1_;
  Linear<T> fc2_;
};

}  // namespace tse::networks
