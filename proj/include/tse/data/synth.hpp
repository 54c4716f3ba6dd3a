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

// Synthetic speakers: a harmonic source with a speaker-specific pitch range,
// shaped by formant resonators and gated into syllables.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "tse/errors.hpp"
#include "tse/rng.hpp"

namespace tse::data {

struct Formant {
  double frequency = 500.0;  // Hz
  double bandwidth = 100.0;  // Hz
};

struct SyntheticSpeaker {
  int id = 0;
  double f0_low = 100.0;   // Hz
  double f0_high = 110.0;  // Hz
  std::vector<Formant> formants;
  double syllable_rate = 4.0;  // syllables per second
};

// Pitch range width in grid slots; neighbouring speakers overlap.
inline constexpr double kDefaultPitchSpread = 2.0;
// Individual deviation of each formant from the pitch-scaled template.
inline constexpr double kFormantDeviation = 0.04;
// Per-utterance wobble of every formant frequency.
inline constexpr double kFormantJitter = 0.05;

// Mixes a seed with further integers into an independent 64-bit seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ a) ^ (b * 0x632be59bd9b4e019ULL));
}

// `count` speakers centred on distinct slots of a log-spaced grid over
// [f0_min, f0_max]; slot order is shuffled by the seed. Each pitch range
// spans `spread` slots around its centre, so spread < 1 gives pairwise
// disjoint ranges and larger values overlap neighbours. Formants follow the
// pitch centre, so pitch and timbre both carry identity.
inline std::vector<SyntheticSpeaker> make_speakers(std::size_t count, std::uint64_t seed,
                                                   double f0_min = 90.0, double f0_max = 330.0,
                                                   double spread = kDefaultPitchSpread) {
  if (!(spread > 0.0)) throw ConfigError("make_speakers: spread must be positive");
  if (count == 0) throw ConfigError("make_speakers: need at least one speaker");
  Rng rng(derive_seed(seed, 0x5eed));
  std::vector<std::size_t> slots(count);
  for (std::size_t i = 0; i < count; ++i) slots[i] = i;
  rng.shuffle(slots);
  const double log_lo = std::log(f0_min);
  const double step = (std::log(f0_max) - log_lo) / static_cast<double>(count);
  std::vector<SyntheticSpeaker> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    SyntheticSpeaker& s = out[i];
    s.id = static_cast<int>(i);
    const double center = log_lo + (static_cast<double>(slots[i]) + 0.5) * step;
    const double half = 0.5 * spread * step;
    s.f0_low = std::exp(center - half);
    s.f0_high = std::exp(center + half);
    // Vocal-tract length tracks pitch: formants scale with the pitch centre,
    // each with a small individual deviation.
    const double tract = std::pow(std::exp(center) / 160.0, 0.35);
    auto dev = [&rng] { return 1.0 + kFormantDeviation * rng.uniform(-1.0, 1.0); };
    s.formants = {{550.0 * tract * dev(), rng.uniform(60.0, 120.0)},
                  {1400.0 * tract * dev(), rng.uniform(80.0, 150.0)},
                  {2500.0 * tract * dev(), rng.uniform(100.0, 200.0)}};
    s.syllable_rate = rng.uniform(3.0, 6.0);
  }
  return out;
}

inline constexpr double kUtterancePeak = 0.5;

// Deterministic utterance of `duration` seconds. Syllables glide in pitch
// within the speaker's range and are separated by short pauses; each
// utterance starts and ends in silence. Peak-normalized to 0.5.
inline std::vector<double> synth_utterance(const SyntheticSpeaker& spk, double duration,
                                           double sample_rate, std::uint64_t seed) {
  if (!(duration > 0.0) || !(sample_rate > 0.0)) {
    throw ConfigError("synth_utterance: duration and sample rate must be positive");
  }
  const auto n = static_cast<std::size_t>(std::lround(duration * sample_rate));
  Rng rng(seed);
  std::vector<double> source(n, 0.0), envelope(n, 0.0);
  const double nyquist = sample_rate / 2.0;
  const double two_pi = 2.0 * std::numbers::pi;

  double t = rng.uniform(0.04, 0.12);
  const double tail = 0.04;
  double phase = rng.uniform(0.0, two_pi);
  while (t < duration - tail - 0.05) {
    const double len = std::min(rng.uniform(0.6, 1.4) / spk.syllable_rate, duration - tail - t);
    const double f_start = rng.uniform(spk.f0_low, spk.f0_high);
    const double f_end = rng.uniform(spk.f0_low, spk.f0_high);
    const double vib_rate = rng.uniform(4.0, 6.0);
    const double amp = rng.uniform(0.6, 1.0);
    const auto i0 = static_cast<std::size_t>(t * sample_rate);
    const auto i1 = std::min(n, static_cast<std::size_t>((t + len) * sample_rate));
    const double ramp = std::min(0.02, len / 4.0) * sample_rate;
    for (std::size_t i = i0; i < i1; ++i) {
      const double u = static_cast<double>(i - i0) / static_cast<double>(i1 - i0);
      double f0 = f_start + (f_end - f_start) * u;
      f0 *= 1.0 + 0.01 * std::sin(two_pi * vib_rate * static_cast<double>(i - i0) / sample_rate);
      f0 = std::clamp(f0, spk.f0_low, spk.f0_high);
      phase += two_pi * f0 / sample_rate;
      if (phase > two_pi) phase -= two_pi;
      double v = 0.0;
      for (int h = 1; h * f0 < 0.95 * nyquist; ++h) {
        v += std::sin(h * phase) / std::pow(static_cast<double>(h), 1.2);
      }
      source[i] = v;
      const double pos = static_cast<double>(i - i0);
      const double rem = static_cast<double>(i1 - 1 - i);
      double env = 1.0;
      if (pos < ramp) env = 0.5 - 0.5 * std::cos(std::numbers::pi * pos / ramp);
      if (rem < ramp) env = std::min(env, 0.5 - 0.5 * std::cos(std::numbers::pi * rem / ramp));
      envelope[i] = amp * env;
    }
    t += len + rng.uniform(0.03, 0.12);
  }

  // Formant emphasis: source plus parallel two-pole resonators.
  std::vector<double> shaped(source);
  for (Formant f : spk.formants) {
    f.frequency *= 1.0 + kFormantJitter * rng.uniform(-1.0, 1.0);
    if (f.frequency >= 0.95 * nyquist) continue;
    const double r = std::exp(-std::numbers::pi * f.bandwidth / sample_rate);
    const double theta = two_pi * f.frequency / sample_rate;
    const double a1 = 2.0 * r * std::cos(theta), a2 = -r * r;
    const double gain = (1.0 - r) * 0.8;
    double y1 = 0.0, y2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double y = gain * source[i] + a1 * y1 + a2 * y2;
      y2 = y1;
      y1 = y;
      shaped[i] += y;
    }
  }

  std::vector<double> out(n);
  double peak = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = shaped[i] * envelope[i] + 0.003 * rng.normal() * envelope[i];
    peak = std::max(peak, std::abs(out[i]));
  }
  if (peak > 0.0) {
    for (double& v : out) v *= kUtterancePeak / peak;
  }
  return out;
}

}  // namespace tse::data
