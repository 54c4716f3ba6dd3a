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
#include <vector>

#include "tse/autodiff/tensor.hpp"
#include "tse/dsp/stft.hpp"
#include "tse/errors.hpp"

namespace tse::dsp {

inline constexpr double kLogMelFloor = 1e-10;

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Triangular HTK-style filters with centers equally spaced on the mel scale
// between 0 Hz and Nyquist. Row-major n_mels × bins.
inline std::vector<double> mel_filterbank(std::size_t n_mels, const StftConfig& cfg) {
  if (n_mels == 0) throw ConfigError("mel filterbank needs at least one filter");
  const std::size_t bins = cfg.bins();
  const double nyquist = cfg.sample_rate / 2.0;
  const double mel_max = hz_to_mel(nyquist);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t m = 0; m < edges.size(); ++m) {
    edges[m] = mel_to_hz(mel_max * static_cast<double>(m) / static_cast<double>(n_mels + 1));
  }
  std::vector<double> fb(n_mels * bins, 0.0);
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / static_cast<double>(cfg.fft_size);
      double v = 0.0;
      if (f > lo && f <= mid) v = (f - lo) / (mid - lo);
      else if (f > mid && f < hi) v = (hi - f) / (hi - mid);
      fb[m * bins + k] = v;
    }
  }
  return fb;
}

// log(filterbank · |STFT|^2 + 1e-10) as an n_mels × frames tensor.
inline ad::Tensor<double> log_mel(const std::vector<double>& signal, const StftConfig& cfg,
                                  std::size_t n_mels) {
  const Spectrogram spec = stft(signal, cfg);
  const std::vector<double> fb = mel_filterbank(n_mels, cfg);
  const std::size_t bins = spec.num_bins, frames = spec.num_frames;
  std::vector<double> out(n_mels * frames, 0.0);
  for (std::size_t m = 0; m < n_mels; ++m)
    for (std::size_t k = 0; k < bins; ++k) {
      const double w = fb[m * bins + k];
      if (w == 0.0) continue;
      for (std::size_t l = 0; l < frames; ++l) out[m * frames + l] += w * std::norm(spec.at(k, l));
    }
  for (double& v : out) v = std::log(v + kLogMelFloor);
  return ad::Tensor<double>::from({n_mels, frames}, std::move(out));
}

}  // namespace tse::dsp
