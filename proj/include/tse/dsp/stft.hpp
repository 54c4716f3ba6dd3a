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

// Short-time Fourier analysis and overlap-add synthesis.

#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "tse/dsp/fft.hpp"
#include "tse/errors.hpp"

namespace tse::dsp {

enum class Window { kSqrtHann, kHann };

struct StftConfig {
  std::size_t fft_size = 512;
  std::size_t frame_length = 512;
  std::size_t frame_shift = 256;
  Window window = Window::kSqrtHann;
  double sample_rate = 16000.0;

  std::size_t bins() const { return fft_size / 2 + 1; }

  void validate() const {
    if (frame_shift == 0 || frame_shift > frame_length || frame_length > fft_size) {
      throw ConfigError("STFT config requires 0 < frame_shift <= frame_length <= fft_size, got shift " +
                        std::to_string(frame_shift) + ", length " + std::to_string(frame_length) +
                        ", fft " + std::to_string(fft_size));
    }
    if (!(sample_rate > 0.0)) throw ConfigError("STFT sample rate must be positive");
  }

  bool operator==(const StftConfig&) const = default;
};

// Separator front end: 512-point FFT, 512-sample sqrt-Hann frames, hop 256.
inline StftConfig separator_stft(double sample_rate = 16000.0) {
  const double ratio = sample_rate / 16000.0;
  const auto len = static_cast<std::size_t>(std::lround(512.0 * ratio));
  return {len, len, len / 2, Window::kSqrtHann, sample_rate};
}

// Embedder front end: 512-point FFT, 400-sample Hann frames, hop 160.
inline StftConfig embedder_stft(double sample_rate = 16000.0) {
  const double ratio = sample_rate / 16000.0;
  return {static_cast<std::size_t>(std::lround(512.0 * ratio)),
          static_cast<std::size_t>(std::lround(400.0 * ratio)),
          static_cast<std::size_t>(std::lround(160.0 * ratio)), Window::kHann, sample_rate};
}

// Periodic window of the configured frame length.
inline std::vector<double> make_window(const StftConfig& cfg) {
  std::vector<double> w(cfg.frame_length);
  const double n = static_cast<double>(cfg.frame_length);
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double hann = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / n);
    w[i] = cfg.window == Window::kSqrtHann ? std::sqrt(hann) : hann;
  }
  return w;
}

inline std::size_t num_frames(std::size_t signal_length, const StftConfig& cfg) {
  if (signal_length < cfg.frame_length) return 0;
  return 1 + (signal_length - cfg.frame_length) / cfg.frame_shift;
}

// One-sided complex spectrogram, bin-major: at(k, l) is bin k of frame l.
struct Spectrogram {
  StftConfig config;
  std::size_t num_bins = 0;
  std::size_t num_frames = 0;
  std::vector<std::complex<double>> bins;

  Spectrogram() = default;
  Spectrogram(const StftConfig& cfg, std::size_t frames)
      : config(cfg), num_bins(cfg.bins()), num_frames(frames), bins(num_bins * frames) {}

  std::complex<double>& at(std::size_t k, std::size_t l) { return bins[k * num_frames + l]; }
  const std::complex<double>& at(std::size_t k, std::size_t l) const {
    return bins[k * num_frames + l];
  }

  std::vector<double> magnitude() const {
    std::vector<double> m(bins.size());
    for (std::size_t i = 0; i < bins.size(); ++i) m[i] = std::abs(bins[i]);
    return m;
  }

  // Length of the waveform that istft produces.
  std::size_t signal_length() const {
    return num_frames == 0 ? 0 : (num_frames - 1) * config.frame_shift + config.frame_length;
  }
};

inline Spectrogram stft(const std::vector<double>& signal, const StftConfig& cfg) {
  cfg.validate();
  if (signal.size() < cfg.frame_length) {
    throw DataError("stft: signal of " + std::to_string(signal.size()) +
                    " samples is shorter than one frame (" + std::to_string(cfg.frame_length) + ")");
  }
  const std::size_t frames = num_frames(signal.size(), cfg);
  Spectrogram spec(cfg, frames);
  const std::vector<double> window = make_window(cfg);
  RealFft fft(cfg.fft_size);
  std::vector<double> frame(cfg.fft_size, 0.0);
  std::vector<std::complex<double>> out(cfg.bins());
  for (std::size_t l = 0; l < frames; ++l) {
    const std::size_t start = l * cfg.frame_shift;
    for (std::size_t i = 0; i < cfg.frame_length; ++i) frame[i] = signal[start + i] * window[i];
    fft.forward(frame, out);
    for (std::size_t k = 0; k < cfg.bins(); ++k) spec.at(k, l) = out[k];
  }
  return spec;
}

// Value of sum_m w^2(n + m * shift) for n in [0, shift), or throws if it is
// not constant (overlap-add condition for analysis = synthesis window).
inline double ola_constant(const StftConfig& cfg) {
  cfg.validate();
  const std::vector<double> w = make_window(cfg);
  double lo = 1e300, hi = -1e300;
  for (std::size_t n = 0; n < cfg.frame_shift; ++n) {
    double s = 0.0;
    for (std::size_t i = n; i < cfg.frame_length; i += cfg.frame_shift) s += w[i] * w[i];
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  if (hi - lo > 1e-9 * hi) {
    throw ConfigError("istft: window and frame shift " + std::to_string(cfg.frame_shift) +
                      " do not satisfy the constant overlap-add condition");
  }
  return 0.5 * (lo + hi);
}

// Squared-window overlap-add envelope for `frames` frames; synthesis output
// is divided by it wherever it is non-negligible.
inline std::vector<double> ola_envelope(const StftConfig& cfg, std::size_t frames) {
  const std::vector<double> w = make_window(cfg);
  const std::size_t len = frames == 0 ? 0 : (frames - 1) * cfg.frame_shift + cfg.frame_length;
  std::vector<double> env(len, 0.0);
  for (std::size_t l = 0; l < frames; ++l)
    for (std::size_t i = 0; i < cfg.frame_length; ++i)
      env[l * cfg.frame_shift + i] += w[i] * w[i];
  return env;
}

inline std::vector<double> inverse_envelope(const StftConfig& cfg, std::size_t frames) {
  const double c = ola_constant(cfg);
  std::vector<double> env = ola_envelope(cfg, frames);
  for (double& e : env) e = e > 1e-10 * c ? 1.0 / e : 0.0;
  return env;
}

// Weighted overlap-add synthesis with the analysis window. Reconstructs
// stft's input exactly wherever the envelope is nonzero.
inline std::vector<double> istft(const Spectrogram& spec) {
  const StftConfig& cfg = spec.config;
  const std::vector<double> inv_env = inverse_envelope(cfg, spec.num_frames);
  const std::vector<double> window = make_window(cfg);
  std::vector<double> out(spec.signal_length(), 0.0);
  RealFft fft(cfg.fft_size);
  std::vector<std::complex<double>> frame_bins(cfg.bins());
  std::vector<double> frame(cfg.fft_size);
  for (std::size_t l = 0; l < spec.num_frames; ++l) {
    for (std::size_t k = 0; k < cfg.bins(); ++k) frame_bins[k] = spec.at(k, l);
    fft.inverse(frame_bins, frame);
    const std::size_t start = l * cfg.frame_shift;
    for (std::size_t i = 0; i < cfg.frame_length; ++i) out[start + i] += frame[i] * window[i];
  }
  for (std::size_t n = 0; n < out.size(); ++n) out[n] *= inv_env[n];
  return out;
}

// Fully overlapped sample range [begin, end) for a signal of `length`
// samples: every sample there is covered by frame_length / frame_shift frames.
struct Interior {
  std::size_t begin = 0;
  std::size_t end = 0;
};

inline Interior interior(std::size_t length, const StftConfig& cfg) {
  const std::size_t frames = num_frames(length, cfg);
  const std::size_t covered = frames == 0 ? 0 : (frames - 1) * cfg.frame_shift + cfg.frame_length;
  const std::size_t margin = cfg.frame_length - cfg.frame_shift;
  if (covered <= 2 * margin) return {0, 0};
  return {margin, covered - margin};
}

}  // namespace tse::dsp
