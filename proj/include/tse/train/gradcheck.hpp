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

// Finite-difference verification of every differentiable component at toy
// sizes: both LSTM wirings (single step and unrolled), the full separator
// under both losses, the embedder and the two losses on their own.

#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "tse/autodiff/grad_check.hpp"
#include "tse/autodiff/ops.hpp"
#include "tse/cells/lstm.hpp"
#include "tse/data/synth.hpp"
#include "tse/dsp/stft.hpp"
#include "tse/losses/losses.hpp"
#include "tse/networks/embedder.hpp"
#include "tse/networks/masking.hpp"
#include "tse/networks/separator.hpp"
#include "tse/rng.hpp"

namespace tse::train {

inline constexpr double kGradCheckTolerance = 1e-4;

struct GradCheckOptions {
  double width_factor = 1.0 / 32.0;  // separator sizes relative to full scale
  std::uint64_t seed = 1;
  double eps = 1e-5;
  bool corrupt = false;  // negative control: perturb analytic gradients
};

struct GradCheckCase {
  std::string name;
  std::string wiring;  // empty where not applicable
  std::size_t params = 0;
  ad::GradCheckResult result;
  double seconds = 0.0;
  // Per-tensor relative error; see ad::grad_check_detailed.
  double error() const { return result.max_tensor_rel_error; }
  bool passed() const { return error() < kGradCheckTolerance; }
};

namespace gc_detail {

using D = double;
using ad::Tensor;

inline Tensor<D> random_tensor(ad::Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<D> v(ad::shape_numel(shape));
  for (D& x : v) x = rng.uniform(lo, hi);
  return Tensor<D>::from(std::move(shape), std::move(v));
}

inline std::vector<double> random_signal(std::size_t n, Rng& rng) {
  std::vector<double> x(n);
  for (double& v : x) v = 0.5 * rng.normal();
  return x;
}

inline void randomize(const std::vector<Tensor<D>>& params, Rng& rng, double scale) {
  for (const auto& p : params) {
    for (D& v : p.mutable_data()) v = scale * rng.uniform(-1.0, 1.0);
  }
}

template <typename Named>
std::vector<Tensor<D>> tensors_of(const Named& named) {
  std::vector<Tensor<D>> out;
  for (const auto& [name, t] : named) {
    t.set_requires_grad(true);
    out.push_back(t);
  }
  return out;
}

inline GradCheckCase run(const std::string& name, const std::string& wiring, const std::function<Tensor<D>()>& loss,
                         const std::vector<Tensor<D>>& params, const GradCheckOptions& opt) {
  const auto start = std::chrono::steady_clock::now();
  std::function<void(std::vector<std::vector<double>>&)> corrupt;
  if (opt.corrupt) {
    corrupt = [](std::vector<std::vector<double>>& g) {
      for (auto& v : g) {
        if (!v.empty()) v[0] += 1.0 + std::abs(v[0]);
      }
    };
  }
  GradCheckCase c;
  c.name = name;
  c.wiring = wiring;
  for (const auto& p : params) c.params += p.numel();
  c.result = ad::grad_check_detailed(loss, params, opt.eps, corrupt);
  c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return c;
}

// Toy cell: hidden 3, features 4, embedding 2.
inline GradCheckCase cell_case(cells::GateWiring w, std::size_t steps, const GradCheckOptions& opt) {
  Rng rng(data::derive_seed(opt.seed, 11 + static_cast<std::uint64_t>(w) + 7 * steps));
  auto p = cells::LstmParams<D>::init(w, 3, 4, 2, rng);
  auto params = tensors_of(p.named());
  randomize(params, rng, 0.8);
  const auto r = random_tensor({steps, 4}, rng);
  const auto e = random_tensor({1, 2}, rng);
  const auto weights = random_tensor({steps, 3}, rng);
  const cells::LstmState<D> s0{random_tensor({1, 3}, rng), random_tensor({1, 3}, rng)};
  auto loss = [=]() {
    if (steps == 1) {
      const auto s = cells::step(p, s0, r, e);
      return ad::add(ad::sum(s.h), ad::scale(ad::sum(ad::mul(s.c, s.c)), 0.5));
    }
    const auto seq = cells::run_sequence(p, r, e, 1);
    return ad::add(ad::sum(ad::mul(seq.hidden, weights)), ad::sum(seq.final_state.c));
  };
  const std::string what = steps == 1 ? "step" : "sequence(T=" + std::to_string(steps) + ")";
  return run("cell." + cells::to_string(w) + "." + what, cells::to_string(w), loss, params, opt);
}

// Toy separator on 9 bins × 8 frames (16-point STFT), batch of 2.
inline GradCheckCase separator_case(cells::GateWiring w, const losses::LossKind& kind, const GradCheckOptions& opt) {
  Rng rng(data::derive_seed(opt.seed, 101 + static_cast<std::uint64_t>(w) + (kind.is_plc() ? 13 : 0)));
  const dsp::StftConfig stft{16, 16, 8, dsp::Window::kSqrtHann, 8000.0};
  const std::size_t frames = 8, len = (frames - 1) * stft.frame_shift + stft.frame_length, n = 2;
  networks::SeparatorConfig cfg;
  cfg.bins = stft.bins();
  cfg = cfg.scaled(opt.width_factor);
  cfg.wiring = w;
  auto sep = std::make_shared<networks::Separator<D>>(cfg, rng);
  auto specs = std::make_shared<std::vector<dsp::Spectrogram>>();
  auto targets = std::make_shared<std::vector<std::vector<double>>>();
  std::vector<D> mags, target_mags;
  for (std::size_t b = 0; b < n; ++b) {
    const auto target = random_signal(len, rng);
    auto mixture = random_signal(len, rng);
    for (std::size_t i = 0; i < len; ++i) mixture[i] += target[i];
    specs->push_back(dsp::stft(mixture, stft));
    targets->push_back(target);
    for (double m : specs->back().magnitude()) mags.push_back(m);
    for (double m : dsp::stft(target, stft).magnitude()) target_mags.push_back(m);
  }
  const auto mag_t = Tensor<D>::from({n, cfg.bins, frames}, std::move(mags));
  const auto emb = random_tensor({n, cfg.embed_dim}, rng);
  auto params = tensors_of(sep->parameters());
  auto loss = [=]() {
    const auto mask = sep->forward(mag_t, emb, true);
    if (kind.is_plc()) return losses::plc_loss(ad::mul(mask, mag_t), target_mags, kind.power);
    return losses::si_snr_loss(networks::masked_istft(mask, std::shared_ptr<const std::vector<dsp::Spectrogram>>(specs)),
                               std::shared_ptr<const std::vector<std::vector<double>>>(targets));
  };
  return run("separator." + cells::to_string(w) + "." + kind.name(), cells::to_string(w), loss, params, opt);
}

inline GradCheckCase embedder_case(const GradCheckOptions& opt) {
  Rng rng(data::derive_seed(opt.seed, 201));
  const networks::EmbedderConfig cfg{5, 3, 4, 3};
  auto emb = std::make_shared<networks::Embedder<D>>(cfg, rng, 4);
  const std::size_t frames = 6, n = 2;
  const auto x = random_tensor({frames * n, cfg.n_mels}, rng);
  const std::vector<int> labels{1, 3};
  auto params = tensors_of(emb->parameters(true));
  auto loss = [=]() { return ad::softmax_cross_entropy(emb->logits(emb->forward(x, n)), labels); };
  return run("embedder.cross_entropy", "standard", loss, params, opt);
}

inline GradCheckCase sisnr_case(const GradCheckOptions& opt) {
  Rng rng(data::derive_seed(opt.seed, 301));
  const std::size_t n = 3, len = 40;
  auto targets = std::make_shared<std::vector<std::vector<double>>>();
  for (std::size_t b = 0; b < n; ++b) targets->push_back(random_signal(len, rng));
  auto est = random_tensor({n, len}, rng);
  est.set_requires_grad(true);
  auto loss = [=]() { return losses::si_snr_loss(est, std::shared_ptr<const std::vector<std::vector<double>>>(targets)); };
  return run("loss.sisnr", "", loss, {est}, opt);
}

inline GradCheckCase plc_case(const GradCheckOptions& opt) {
  Rng rng(data::derive_seed(opt.seed, 401));
  const std::size_t count = 30;
  auto est = random_tensor({count}, rng, 0.2, 2.0);
  est.set_requires_grad(true);
  std::vector<D> target(count);
  for (D& v : target) v = rng.uniform(0.0, 2.0);
  auto loss = [=]() { return losses::plc_loss(est, target); };
  return run("loss.plc", "", loss, {est}, opt);
}

}  // namespace gc_detail

inline std::vector<GradCheckCase> run_gradcheck_suite(const GradCheckOptions& opt = {}) {
  using cells::GateWiring;
  std::vector<GradCheckCase> out;
  for (GateWiring w : {GateWiring::kStandard, GateWiring::kCustomized}) {
    out.push_back(gc_detail::cell_case(w, 1, opt));
    out.push_back(gc_detail::cell_case(w, 8, opt));
  }
  for (GateWiring w : {GateWiring::kStandard, GateWiring::kCustomized}) {
    out.push_back(gc_detail::separator_case(w, losses::LossKind::si_snr(), opt));
    out.push_back(gc_detail::separator_case(w, losses::LossKind::plc(), opt));
  }
  out.push_back(gc_detail::embedder_case(opt));
  out.push_back(gc_detail::sisnr_case(opt));
  out.push_back(gc_detail::plc_case(opt));
  return out;
}

}  // namespace tse::train
