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
#include <vector>

#include "tse/autodiff/ops.hpp"
#include "tse/cells/lstm.hpp"
#include "tse/dsp/mel.hpp"
#include "tse/networks/config.hpp"
#include "tse/networks/layers.hpp"
#include "tse/rng.hpp"

namespace tse::networks {

// Log-mel frames of a reference utterance, laid out frames × n_mels and
// standardized with a single per-utterance mean and deviation. Per-bin
// normalization would strip the long-term spectral envelope, which is the
// main speaker cue.
struct MelFrames {
  std::size_t frames = 0;
  std::size_t n_mels = 0;
  std::vector<double> values;
};

inline MelFrames embedder_features(const std::vector<double>& reference, double sample_rate,
                                   std::size_t n_mels) {
  const dsp::StftConfig cfg = dsp::embedder_stft(sample_rate);
  if (reference.size() < cfg.frame_length) {
    throw DataError("reference utterance of " + std::to_string(reference.size()) +
                    " samples is shorter than one embedder frame (" +
                    std::to_string(cfg.frame_length) + ")");
  }
  const auto mel = dsp::log_mel(reference, cfg, n_mels);  // n_mels × frames
  const std::size_t frames = mel.dim(1);
  MelFrames out{frames, n_mels, std::vector<double>(frames * n_mels)};
  const auto v = mel.data();
  double mu = 0.0;
  for (double x : v) mu += x;
  mu /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mu) * (x - mu);
  const double inv = 1.0 / std::sqrt(var / static_cast<double>(v.size()) + 1e-3);
  for (std::size_t m = 0; m < n_mels; ++m) {
    for (std::size_t l = 0; l < frames; ++l) out.values[l * n_mels + m] = (v[m * frames + l] - mu) * inv;
  }
  return out;
}

template <typename T>
class Embedder {
 public:
  // num_speakers > 0 adds a classification head used only for training.
  Embedder(const EmbedderConfig& cfg, Rng& rng, std::size_t num_speakers = 0) : cfg_(cfg) {
    cfg_.validate();
    std::size_t in = cfg_.n_mels;
    for (std::size_t i = 0; i < cfg_.layers; ++i) {
      layers_.push_back(cells::LstmParams<T>::init(cells::GateWiring::kStandard, cfg_.hidden, in, 0, rng));
      in = cfg_.hidden;
    }
    projection_ = Linear<T>(cfg_.hidden, cfg_.embed_dim, rng);
    if (num_speakers > 0) head_ = Linear<T>(cfg_.embed_dim, num_speakers, rng);
  }

  const EmbedderConfig& config() const { return cfg_; }
  std::size_t num_speakers() const { return head_.weight.defined() ? head_.weight.dim(0) : 0; }

  // features: (L·N)×n_mels time-major → N×embed_dim unit-norm rows.
  Tensor<T> forward(const Tensor<T>& features, std::size_t batch) const {
    if (features.rank() != 2 || features.dim(1) != cfg_.n_mels) {
      throw DimensionError("embedder expects (frames·N)×" + std::to_string(cfg_.n_mels) +
                           " features, got " + ad::shape_string(features.shape()));
    }
    Tensor<T> x = features;
    cells::LstmState<T> last;
    for (const auto& layer : layers_) {
      auto seq = cells::run_sequence(layer, x, Tensor<T>(), batch);
      x = seq.hidden;
      last = seq.final_state;
    }
    return ad::l2_normalize_rows(projection_(last.h));
  }

  Tensor<T> logits(const Tensor<T>& embedding) const {
    if (!head_.weight.defined()) throw ConfigError("embedder has no classification head");
    return head_(embedding);
  }

  NamedTensors<T> parameters(bool include_head = false) const {
    NamedTensors<T> out;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      for (auto& [name, t] : layers_[i].named()) out.emplace_back("embedder.lstm" + std::to_string(i + 1) + "." + name, t);
    }
    projection_.collect("embedder.projection", out);
    if (include_head && head_.weight.defined()) head_.collect("embedder.head", out);
    return out;
  }

  // Embedding of one reference waveform.
  std::vector<double> embed(const std::vector<double>& reference, double sample_rate) const {
    const MelFrames mf = embedder_features(reference, sample_rate, cfg_.n_mels);
    std::vector<T> vals(mf.values.begin(), mf.values.end());
    const Tensor<T> out = forward(Tensor<T>::from({mf.frames, mf.n_mels}, std::move(vals)), 1);
    return {out.data().begin(), out.data().end()};
  }

 private:
  EmbedderConfig cfg_;
  std::vector<cells::LstmParams<T>> layers_;
  Linear<T> projection_;
  Linear<T> head_;
};

}  // namespace tse::networks
