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

// Mask application: X̃(k,l) = M(k,l) Y(k,l) with the mixture phase, then
// overlap-add resynthesis.

#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "tse/autodiff/tensor.hpp"
#include "tse/dsp/fft.hpp"
#include "tse/dsp/stft.hpp"
#include "tse/errors.hpp"

namespace tse::networks {

// Bin-major B×L mask values.
struct Mask {
  std::size_t bins = 0;
  std::size_t frames = 0;
  std::vector<double> values;
};

inline dsp::Spectrogram masked_spectrogram(const dsp::Spectrogram& mixture, const Mask& mask) {
  if (mask.bins != mixture.num_bins || mask.frames != mixture.num_frames ||
      mask.values.size() != mixture.bins.size()) {
    throw DimensionError("apply_mask: mask " + std::to_string(mask.bins) + "×" +
                         std::to_string(mask.frames) + " does not match spectrogram " +
                         std::to_string(mixture.num_bins) + "×" + std::to_string(mixture.num_frames));
  }
  dsp::Spectrogram out = mixture;
  for (std::size_t i = 0; i < out.bins.size(); ++i) out.bins[i] *= mask.values[i];
  return out;
}

inline std::vector<double> apply_mask(const dsp::Spectrogram& mixture, const Mask& mask) {
  return dsp::istft(masked_spectrogram(mixture, mask));
}

// Ideal ratio mask |X_t| / (|X_t| + |X_i|), 0 where both vanish.
inline Mask oracle_mask(const dsp::Spectrogram& target, const dsp::Spectrogram& interferer) {
  if (target.bins.size() != interferer.bins.size()) {
    throw DimensionError("oracle_mask: spectrogram shapes differ");
  }
  Mask m{target.num_bins, target.num_frames, std::vector<double>(target.bins.size())};
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    const double a = std::abs(target.bins[i]);
    const double b = std::abs(interferer.bins[i]);
    m.values[i] = a + b > 0.0 ? a / (a + b) : 0.0;
  }
  return m;
}

inline Mask unit_mask(const dsp::Spectrogram& spec) {
  return {spec.num_bins, spec.num_frames, std::vector<double>(spec.bins.size(), 1.0)};
}

// Differentiable resynthesis of a batch of masks: N×B×L masks and N mixture
// spectrograms → N×S waveforms. The mixture spectra are constants.
template <typename T>
ad::Tensor<T> masked_istft(const ad::Tensor<T>& mask,
                           std::shared_ptr<const std::vector<dsp::Spectrogram>> mixtures) {
  if (mask.rank() != 3 || mixtures->size() != mask.dim(0)) {
    throw DimensionError("masked_istft: mask " + ad::shape_string(mask.shape()) + " for " +
                         std::to_string(mixtures->size()) + " spectrograms");
  }
  const std::size_t n = mask.dim(0);
  const dsp::Spectrogram& first = mixtures->front();
  const dsp::StftConfig cfg = first.config;
  const std::size_t bins = first.num_bins, frames = first.num_frames;
  for (const auto& s : *mixtures) {
    if (s.num_bins != mask.dim(1) || s.num_frames != mask.dim(2) || !(s.config == cfg)) {
      throw DimensionError("masked_istft: spectrogram does not match mask " +
                           ad::shape_string(mask.shape()));
    }
  }
  const std::size_t len = first.signal_length();
  std::vector<T> out(n * len);
  const auto mv = mask.data();
  for (std::size_t b = 0; b < n; ++b) {
    dsp::Spectrogram s = (*mixtures)[b];
    for (std::size_t i = 0; i < s.bins.size(); ++i) s.bins[i] *= static_cast<double>(mv[b * bins * frames + i]);
    const std::vector<double> wave = dsp::istft(s);
    for (std::size_t i = 0; i < len; ++i) out[b * len + i] = static_cast<T>(wave[i]);
  }
  return ad::make_result<T>({n, len}, std::move(out), {mask}, [=](ad::Node<T>& self) {
    T* gm = ad::parent_grad(self, 0);
    if (!gm) return;
    const std::vector<double> window = dsp::make_window(cfg);
    const std::vector<double> inv_env = dsp::inverse_envelope(cfg, frames);
    const std::size_t nfft = cfg.fft_size;
    dsp::RealFft fft(nfft);
    std::vector<double> frame(nfft, 0.0);
    std::vector<std::complex<double>> g_spec(cfg.bins());
    for (std::size_t b = 0; b < n; ++b) {
      const dsp::Spectrogram& y = (*mixtures)[b];
      const T* g = self.grad.data() + b * len;
      for (std::size_t l = 0; l < frames; ++l) {
        const std::size_t start = l * cfg.frame_shift;
        for (std::size_t m = 0; m < cfg.frame_length; ++m) {
          frame[m] = static_cast<double>(g[start + m]) * inv_env[start + m] * window[m];
        }
        fft.forward(frame, g_spec);
        for (std::size_t k = 0; k < bins; ++k) {
          const double weight = (k == 0 || 2 * k == nfft) ? 1.0 : 2.0;
          const double d = weight / static_cast<double>(nfft) *
                           (y.at(k, l) * std::conj(g_spec[k])).real();
          gm[b * bins * frames + k * frames + l] += static_cast<T>(d);
        }
      }
    }
  });
}

}  // namespace tse::networks
