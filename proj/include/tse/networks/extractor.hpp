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

// Speaker-conditioned extraction system: embedder plus separator, bound to
// the separator's STFT front end.

#pragma once

#include <cstddef>
#include <memory>
#include <vector>

#include "tse/autodiff/tensor.hpp"
#include "tse/dsp/stft.hpp"
#include "tse/networks/embedder.hpp"
#include "tse/networks/masking.hpp"
#include "tse/networks/separator.hpp"
#include "tse/rng.hpp"

namespace tse::networks {

template <typename T>
class Extractor {
 public:
  Extractor(const SeparatorConfig& sep, const EmbedderConfig& emb, const dsp::StftConfig& stft,
            Rng& rng, std::size_t embedder_speakers = 0)
      : stft_(stft), separator_(sep, rng), embedder_(emb, rng, embedder_speakers) {
    stft_.validate();
    if (sep.bins != stft_.bins()) {
      throw ConfigError("separator expects " + std::to_string(sep.bins) + " bins but the STFT yields " +
                        std::to_string(stft_.bins()));
    }
    if (sep.embed_dim != emb.embed_dim) {
      throw ConfigError("separator embedding width " + std::to_string(sep.embed_dim) +
                        " differs from embedder output " + std::to_string(emb.embed_dim));
    }
  }

  const dsp::StftConfig& stft() const { return stft_; }
  double sample_rate() const { return stft_.sample_rate; }
  Separator<T>& separator() { return separator_; }
  const Separator<T>& separator() const { return separator_; }
  Embedder<T>& embedder() { return embedder_; }
  const Embedder<T>& embedder() const { return embedder_; }

  std::vector<double> embed(const std::vector<double>& reference) const {
    ad::NoGradGuard no_grad;
    return embedder_.embed(reference, sample_rate());
  }

  // Inference mask for one mixture (batch-norm running statistics).
  Mask mask(const dsp::Spectrogram& mixture, const std::vector<double>& embedding) {
    ad::NoGradGuard no_grad;
    const auto mags = mixture.magnitude();
    std::vector<T> mv(mags.begin(), mags.end());
    std::vector<T> ev(embedding.begin(), embedding.end());
    const std::size_t dim = ev.size();
    const auto m = separator_.forward(
        ad::Tensor<T>::from({1, mixture.num_bins, mixture.num_frames}, std::move(mv)),
        ad::Tensor<T>::from({1, dim}, std::move(ev)), false);
    return {mixture.num_bins, mixture.num_frames, {m.data().begin(), m.data().end()}};
  }

  std::vector<double> extract(const std::vector<double>& mixture, const std::vector<double>& reference) {
    const auto spec = dsp::stft(mixture, stft_);
    auto out = apply_mask(spec, mask(spec, embed(reference)));
    out.resize(mixture.size(), 0.0);
    return out;
  }

 private:
  dsp::StftConfig stft_;
  Separator<T> separator_;
  Embedder<T> embedder_;
};

}  // namespace tse::networks
