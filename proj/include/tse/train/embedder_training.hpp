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

// Desk-scale speaker-embedder training: a classification head over the
// embedder speaker pool, trained on random fixed-length crops. Embeddings
// are the L2-normalized pre-head outputs.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <vector>

#include <nlohmann/json.hpp>

#include "tse/autodiff/ops.hpp"
#include "tse/data/dataset.hpp"
#include "tse/data/synth.hpp"
#include "tse/errors.hpp"
#include "tse/networks/embedder.hpp"
#include "tse/rng.hpp"
#include "tse/train/adam.hpp"
#include "tse/train/config.hpp"

namespace tse::train {

using LogSink = std::function<void(const nlohmann::json&)>;

namespace detail {

// Time-major (L·N)×n_mels batch from per-utterance features of equal length.
template <typename T>
ad::Tensor<T> stack_frames(const std::vector<networks::MelFrames>& items) {
  const std::size_t n = items.size(), frames = items.front().frames, mels = items.front().n_mels;
  std::vector<T> v(frames * n * mels);
  for (std::size_t b = 0; b < n; ++b) {
    if (items[b].frames != frames) throw DimensionError("embedder batch items differ in length");
    for (std::size_t l = 0; l < frames; ++l) {
      for (std::size_t m = 0; m < mels; ++m) v[(l * n + b) * mels + m] = static_cast<T>(items[b].values[l * mels + m]);
    }
  }
  return ad::Tensor<T>::from({frames * n, mels}, std::move(v));
}

}  // namespace detail

template <typename T>
networks::Embedder<T> train_embedder(const networks::EmbedderConfig& model_cfg, const EmbedderTrainConfig& cfg,
                                     const std::vector<data::LabeledUtterance>& pool, double sample_rate,
                                     const LogSink& log = {}) {
  cfg.validate();
  if (pool.empty()) throw DataError("embedder training pool is empty");
  std::map<int, int> classes;
  for (const auto& u : pool) classes.emplace(u.speaker, 0);
  if (classes.size() < 2) throw DataError("embedder training needs at least 2 speakers");
  int next = 0;
  for (auto& [spk, cls] : classes) cls = next++;

  const auto crop = static_cast<std::size_t>(std::lround(cfg.crop_seconds * sample_rate));
  for (const auto& u : pool) {
    if (u.samples.size() < crop) throw DataError("embedder utterance shorter than the training crop");
  }

  Rng rng(data::derive_seed(cfg.seed, 0xe3b));
  networks::Embedder<T> emb(model_cfg, rng, classes.size());
  std::vector<ad::Tensor<T>> params;
  for (const auto& [name, t] : emb.parameters(true)) params.push_back(t);
  Adam<T> opt(params, {cfg.learning_rate});

  std::vector<std::size_t> order(pool.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<networks::MelFrames> feats;
      std::vector<int> labels;
      for (std::size_t i = start; i < end; ++i) {
        const auto& u = pool[order[i]];
        const std::size_t off = rng.index(u.samples.size() - crop + 1);
        const std::vector<double> seg(u.samples.begin() + static_cast<std::ptrdiff_t>(off),
                                      u.samples.begin() + static_cast<std::ptrdiff_t>(off + crop));
        feats.push_back(networks::embedder_features(seg, sample_rate, model_cfg.n_mels));
        labels.push_back(classes.at(u.speaker));
      }
      opt.zero_grad();
      const auto x = detail::stack_frames<T>(feats);
      const auto loss = ad::softmax_cross_entropy(emb.logits(emb.forward(x, feats.size())), labels);
      const double value = static_cast<double>(loss.item());
      if (!std::isfinite(value)) throw NumericalError("embedder loss is not finite at step " + std::to_string(step));
      loss.backward();
      clip_grad_norm(opt.params(), cfg.grad_clip_norm);
      opt.step();
      ++step;
      total += value;
      ++batches;
    }
    if (log) log({{"event", "embedder_epoch"}, {"epoch", epoch}, {"step", step}, {"train_loss", total / batches}});
  }
  return emb;
}

struct EmbeddingSeparation {
  double intra = 0.0;  // mean cosine between utterances of one speaker
  double inter = 0.0;  // mean cosine across speakers
};

template <typename T>
EmbeddingSeparation embedding_separation(const networks::Embedder<T>& emb,
                                         const std::vector<data::LabeledUtterance>& utts, double sample_rate) {
  std::vector<std::vector<double>> e;
  for (const auto& u : utts) {
    ad::NoGradGuard no_grad;
    e.push_back(emb.embed(u.samples, sample_rate));
  }
  double intra = 0.0, inter = 0.0;
  std::size_t n_intra = 0, n_inter = 0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    for (std::size_t j = i + 1; j < e.size(); ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < e[i].size(); ++k) dot += e[i][k] * e[j][k];
      if (utts[i].speaker == utts[j].speaker) {
        intra += dot;
        ++n_intra;
      } else {
        inter += dot;
        ++n_inter;
      }
    }
  }
  if (n_intra == 0 || n_inter == 0) throw DataError("embedding separation needs repeated and distinct speakers");
  return {intra / static_cast<double>(n_intra), inter / static_cast<double>(n_inter)};
}

}  // namespace tse::train
