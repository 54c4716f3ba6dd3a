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

// Scale-invariant SNR, power-law-compressed spectral loss and their
// differentiable forms.
//
// SI-SNR of an estimate u against a target s, both made zero-mean:
//   s_t = (<u, s> / |s|^2) s,   e = u - s_t,
//   SI-SNR = 10 log10(|s_t|^2 / |e|^2)
// The ratio is clamped to [1e-8, 1e8], i.e. the value lies in [-80, 80] dB.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "tse/autodiff/tensor.hpp"
#include "tse/errors.hpp"

namespace tse::losses {

inline constexpr double kSiSnrEpsilon = 1e-8;
inline constexpr double kPlcPower = 0.3;

struct LossKind {
  enum class Variant { kPlc, kSiSnr };
  Variant variant = Variant::kSiSnr;
  double power = kPlcPower;  // PLC only

  static LossKind plc(double power = kPlcPower) {
    if (!(power > 0.0 && power <= 1.0)) throw ConfigError("PLC power must lie in (0, 1]");
    return {Variant::kPlc, power};
  }
  static LossKind si_snr() { return {Variant::kSiSnr, kPlcPower}; }
  bool is_plc() const { return variant == Variant::kPlc; }

  std::string name() const { return is_plc() ? "plc" : "sisnr"; }
  static LossKind parse(const std::string& s) {
    if (s == "plc") return plc();
    if (s == "sisnr") return si_snr();
    throw ConfigError("unknown loss '" + s + "' (expected plc or sisnr)");
  }
};

namespace detail {

struct Projection {
  std::vector<double> estimate;  // zero-mean estimate
  std::vector<double> target;    // zero-mean target
  double target_energy = 0.0;
  double dot = 0.0;
  double proj_energy = 0.0;      // |s_t|^2
  double error_energy = 0.0;     // |e|^2
  double estimate_energy = 0.0;
};

template <typename A, typename B>
Projection project(const A& estimate, const B& target, std::size_t len) {
  Projection p;
  p.estimate.resize(len);
  p.target.resize(len);
  double me = 0.0, mt = 0.0;
  for (std::size_t i = 0; i < len; ++i) {
    me += static_cast<double>(estimate[i]);
    mt += static_cast<double>(target[i]);
  }
  me /= static_cast<double>(len);
  mt /= static_cast<double>(len);
  for (std::size_t i = 0; i < len; ++i) {
    p.estimate[i] = static_cast<double>(estimate[i]) - me;
    p.target[i] = static_cast<double>(target[i]) - mt;
    p.target_energy += p.target[i] * p.target[i];
    p.dot += p.estimate[i] * p.target[i];
    p.estimate_energy += p.estimate[i] * p.estimate[i];
  }
  if (p.target_energy == 0.0) throw DataError("si_snr: target is all zero");
  const double alpha = p.dot / p.target_energy;
  for (std::size_t i = 0; i < len; ++i) {
    const double st = alpha * p.target[i];
    const double e = p.estimate[i] - st;
    p.proj_energy += st * st;
    p.error_energy += e * e;
  }
  return p;
}

// Clamped dB value; sets `active` when the clamp does not bind.
inline double clamped_db(const Projection& p, bool* active = nullptr) {
  if (active) *active = false;
  if (p.estimate_energy == 0.0) return 10.0 * std::log10(kSiSnrEpsilon);
  if (p.error_energy == 0.0) return -10.0 * std::log10(kSiSnrEpsilon);
  const double ratio = p.proj_energy / p.error_energy;
  if (ratio <= kSiSnrEpsilon) return 10.0 * std::log10(kSiSnrEpsilon);
  if (ratio >= 1.0 / kSiSnrEpsilon) return -10.0 * std::log10(kSiSnrEpsilon);
  if (active) *active = true;
  return 10.0 * std::log10(ratio);
}

}  // namespace detail

// SI-SNR in dB.
inline double si_snr(const std::vector<double>& estimate, const std::vector<double>& target) {
  if (estimate.size() != target.size()) {
    throw DimensionError("si_snr: estimate has " + std::to_string(estimate.size()) +
                         " samples, target " + std::to_string(target.size()));
  }
  if (estimate.empty()) throw DimensionError("si_snr: empty signals");
  return detail::clamped_db(detail::project(estimate, target, estimate.size()));
}

// SI-SNR(extracted, target) - SI-SNR(mixture, target).
inline double si_sdr_improvement(const std::vector<double>& extracted, const std::vector<double>& mixture,
                                 const std::vector<double>& target) {
  return si_snr(extracted, target) - si_snr(mixture, target);
}

// Mean over the batch of -SI-SNR for N×S estimates against N targets.
template <typename T>
ad::Tensor<T> si_snr_loss(const ad::Tensor<T>& estimate,
                          std::shared_ptr<const std::vector<std::vector<double>>> targets) {
  if (estimate.rank() != 2 || estimate.dim(0) != targets->size()) {
    throw DimensionError("si_snr_loss: estimate " + ad::shape_string(estimate.shape()) + " for " +
                         std::to_string(targets->size()) + " targets");
  }
  const std::size_t n = estimate.dim(0), len = estimate.dim(1);
  auto grads = std::make_shared<std::vector<double>>(n * len, 0.0);
  const auto ev = estimate.data();
  double total = 0.0;
  const double db = 10.0 / std::numbers::ln10;
  for (std::size_t b = 0; b < n; ++b) {
    if ((*targets)[b].size() != len) throw DimensionError("si_snr_loss: target length mismatch");
    const auto p = detail::project(ev.subspan(b * len, len), (*targets)[b], len);
    bool active = false;
    total -= detail::clamped_db(p, &active);
    if (!active) continue;
    // d SI-SNR / du = db * (2 s_t / |s_t|^2 - 2 e / |e|^2); the mean removal
    // projects the result onto zero-mean signals.
    const double alpha = p.dot / p.target_energy;
    double mean_g = 0.0;
    double* g = grads->data() + b * len;
    for (std::size_t i = 0; i < len; ++i) {
      const double st = alpha * p.target[i];
      const double e = p.estimate[i] - st;
      g[i] = -db * (2.0 * st / p.proj_energy - 2.0 * e / p.error_energy);
      mean_g += g[i];
    }
    mean_g /= static_cast<double>(len);
    for (std::size_t i = 0; i < len; ++i) g[i] -= mean_g;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  return ad::make_result<T>({1}, {static_cast<T>(total * inv_n)}, {estimate},
                            [grads, inv_n](ad::Node<T>& self) {
    T* ge = ad::parent_grad(self, 0);
    if (!ge) return;
    const double up = static_cast<double>(self.grad[0]) * inv_n;
    for (std::size_t i = 0; i < grads->size(); ++i) ge[i] += static_cast<T>(up * (*grads)[i]);
  });
}

// Sum over bins of (|X|^p - |X̃|^p)^2. The derivative at a zero estimate
// magnitude is taken as zero.
template <typename T>
ad::Tensor<T> plc_loss(const ad::Tensor<T>& estimate_mag, const std::vector<T>& target_mag,
                       double power = kPlcPower) {
  if (estimate_mag.numel() != target_mag.size()) {
    throw DimensionError("plc_loss: estimate " + ad::shape_string(estimate_mag.shape()) + " vs " +
                         std::to_string(target_mag.size()) + " target magnitudes");
  }
  const auto ev = estimate_mag.data();
  double total = 0.0;
  auto grads = std::make_shared<std::vector<double>>(ev.size(), 0.0);
  for (std::size_t i = 0; i < ev.size(); ++i) {
    const double e = static_cast<double>(ev[i]);
    const double t = static_cast<double>(target_mag[i]);
    if (e < 0.0 || t < 0.0) throw DataError("plc_loss: negative magnitude");
    const double ep = std::pow(e, power);
    const double d = std::pow(t, power) - ep;
    total += d * d;
    if (e > 0.0) (*grads)[i] = -2.0 * d * power * ep / e;
  }
  return ad::make_result<T>({1}, {static_cast<T>(total)}, {estimate_mag}, [grads](ad::Node<T>& self) {
    T* ge = ad::parent_grad(self, 0);
    if (!ge) return;
    const double up = static_cast<double>(self.grad[0]);
    for (std::size_t i = 0; i < grads->size(); ++i) ge[i] += static_cast<T>(up * (*grads)[i]);
  });
}

}  // namespace tse::losses
