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

// Separator training loop, validation and the metric evaluation paths.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tse/autodiff/ops.hpp"
#include "tse/data/dataset.hpp"
#include "tse/data/synth.hpp"
#include "tse/dsp/stft.hpp"
#include "tse/errors.hpp"
#include "tse/losses/losses.hpp"
#include "tse/losses/report.hpp"
#include "tse/networks/checkpoint.hpp"
#include "tse/networks/extractor.hpp"
#include "tse/networks/masking.hpp"
#include "tse/rng.hpp"
#include "tse/train/adam.hpp"
#include "tse/train/config.hpp"
#include "tse/train/embedder_training.hpp"

namespace tse::train {

// Per-sample tensors that stay fixed during training.
template <typename T>
struct Prepared {
  dsp::Spectrogram spec;
  std::vector<T> mags;
  std::vector<T> target_mags;  // PLC only
  std::vector<double> target;  // cut to the resynthesis length
  std::vector<double> embedding;
};

template <typename T>
std::vector<Prepared<T>> prepare(const networks::Extractor<T>& model, const std::vector<data::MixtureSample>& samples,
                                 bool with_target_mags) {
  std::vector<Prepared<T>> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    Prepared<T> p;
    p.spec = dsp::stft(s.mixture, model.stft());
    const auto m = p.spec.magnitude();
    p.mags.assign(m.begin(), m.end());
    if (with_target_mags) {
      const auto tm = dsp::stft(s.target, model.stft()).magnitude();
      p.target_mags.assign(tm.begin(), tm.end());
    }
    p.target.assign(s.target.begin(), s.target.begin() + static_cast<std::ptrdiff_t>(p.spec.signal_length()));
    p.embedding = model.embed(s.reference);
    out.push_back(std::move(p));
  }
  return out;
}

// Loss of one batch. PLC is summed over bins and averaged over the batch;
// SI-SNR is the batch mean of -SI-SNR on the resynthesized waveforms.
template <typename T>
ad::Tensor<T> batch_loss(networks::Extractor<T>& model, const std::vector<const Prepared<T>*>& items,
                         const losses::LossKind& loss, bool training) {
  const std::size_t n = items.size();
  const std::size_t bins = items.front()->spec.num_bins, frames = items.front()->spec.num_frames;
  const std::size_t emb = items.front()->embedding.size();
  std::vector<T> mags, embs, target_mags;
  mags.reserve(n * bins * frames);
  for (const auto* p : items) {
    if (p->spec.num_frames != frames) throw DimensionError("batch items differ in frame count");
    mags.insert(mags.end(), p->mags.begin(), p->mags.end());
    for (double v : p->embedding) embs.push_back(static_cast<T>(v));
    if (loss.is_plc()) target_mags.insert(target_mags.end(), p->target_mags.begin(), p->target_mags.end());
  }
  const auto mag_t = ad::Tensor<T>::from({n, bins, frames}, std::move(mags));
  const auto mask = model.separator().forward(mag_t, ad::Tensor<T>::from({n, emb}, std::move(embs)), training);
  if (loss.is_plc()) {
    const auto est = ad::mul(mask, mag_t);
    return ad::scale(losses::plc_loss(est, target_mags, loss.power), static_cast<T>(1.0 / static_cast<double>(n)));
  }
  auto specs = std::make_shared<std::vector<dsp::Spectrogram>>();
  auto targets = std::make_shared<std::vector<std::vector<double>>>();
  for (const auto* p : items) {
    specs->push_back(p->spec);
    targets->push_back(p->target);
  }
  return losses::si_snr_loss(networks::masked_istft(mask, std::shared_ptr<const std::vector<dsp::Spectrogram>>(specs)),
                             std::shared_ptr<const std::vector<std::vector<double>>>(targets));
}

// Sample-weighted mean loss in inference mode.
template <typename T>
double validation_loss(networks::Extractor<T>& model, const std::vector<Prepared<T>>& set,
                       const losses::LossKind& loss, std::size_t batch_size) {
  if (set.empty()) throw DataError("validation set is empty");
  ad::NoGradGuard no_grad;
  double total = 0.0;
  for (std::size_t start = 0; start < set.size(); start += batch_size) {
    std::vector<const Prepared<T>*> items;
    for (std::size_t i = start; i < std::min(set.size(), start + batch_size); ++i) items.push_back(&set[i]);
    total += static_cast<double>(batch_loss(model, items, loss, false).item()) * static_cast<double>(items.size());
  }
  return total / static_cast<double>(set.size());
}

struct TrainResult {
  networks::Checkpoint best;
  double initial_val_loss = 0.0;
  double best_val_loss = 0.0;
  std::size_t best_epoch = 0;
  std::size_t epochs = 0;
  std::size_t steps = 0;
  bool early_stopped = false;
};

// Builds an extractor whose sizes follow the training config at the
// dataset's sample rate. The embedder weights are left at initialization.
template <typename T>
networks::Extractor<T> make_extractor(const TrainConfig& cfg, double sample_rate) {
  const auto stft = dsp::separator_stft(sample_rate);
  Rng rng(data::derive_seed(cfg.seed, 0x5e9));
  return networks::Extractor<T>(cfg.separator(stft.bins()), cfg.embedder_model(), stft, rng);
}

// Trains the separator of `model` (its embedder stays frozen). On return
// the model holds the best-validation parameters.
template <typename T>
TrainResult train_separator(networks::Extractor<T>& model, const data::Dataset& ds, const TrainConfig& cfg,
                            const LogSink& log = {}) {
  cfg.validate();
  if (ds.train.empty()) throw DataError("training set is empty");
  if (ds.val.empty()) throw DataError("validation set is empty");
  if (std::abs(ds.sample_rate - model.sample_rate()) > 1e-9) {
    throw DataError("dataset sample rate " + std::to_string(ds.sample_rate) + " Hz differs from the model's " +
                    std::to_string(model.sample_rate()) + " Hz");
  }
  if (model.separator().config().wiring != cfg.wiring) throw ConfigError("model wiring differs from the config");

  const bool plc = cfg.loss.is_plc();
  const auto train_set = prepare(model, ds.train, plc);
  const auto val_set = prepare(model, ds.val, plc);

  std::vector<ad::Tensor<T>> params;
  for (const auto& [name, t] : model.separator().parameters()) params.push_back(t);
  Adam<T> opt(params, {cfg.learning_rate});
  Rng rng(data::derive_seed(cfg.seed, 0xba7c));
  const nlohmann::json config_json = cfg;

  auto emit = [&](const nlohmann::json& j) {
    if (log) log(j);
  };
  auto checked = [](double v, const std::string& what, std::size_t step) {
    if (!std::isfinite(v)) {
      throw NumericalError(what + " is not finite (" + std::to_string(v) + ") at step " + std::to_string(step));
    }
    return v;
  };

  TrainResult r;
  r.initial_val_loss = checked(validation_loss(model, val_set, cfg.loss, cfg.batch_size), "validation loss", 0);
  r.best_val_loss = r.initial_val_loss;
  r.best = networks::make_checkpoint(model, {{"train", config_json}, {"epoch", 0}});
  emit({{"event", "epoch"}, {"epoch", 0}, {"step", 0}, {"val_loss", r.initial_val_loss}});

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t since_best = 0;
  bool out_of_steps = false;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs && !out_of_steps; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::vector<const Prepared<T>*> items;
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i) {
        items.push_back(&train_set[order[i]]);
      }
      opt.zero_grad();
      const auto loss = batch_loss(model, items, cfg.loss, true);
      const double value = checked(static_cast<double>(loss.item()), "training loss", r.steps + 1);
      loss.backward();
      const ClipResult clip = clip_grad_norm(opt.params(), cfg.grad_clip_norm);
      opt.step();
      ++r.steps;
      epoch_loss += value;
      ++batches;
      emit({{"event", "step"},
            {"step", r.steps},
            {"epoch", epoch},
            {"train_loss", value},
            {"grad_norm", clip.norm},
            {"clipped_norm", clip.clipped_norm}});
      if (cfg.max_steps > 0 && r.steps >= cfg.max_steps) {
        out_of_steps = true;
        break;
      }
    }
    const double val = checked(validation_loss(model, val_set, cfg.loss, cfg.batch_size), "validation loss", r.steps);
    r.epochs = epoch;
    if (val < r.best_val_loss) {
      r.best_val_loss = val;
      r.best_epoch = epoch;
      r.best = networks::make_checkpoint(model, {{"train", config_json}, {"epoch", epoch}});
      since_best = 0;
    } else {
      ++since_best;
    }
    emit({{"event", "epoch"},
          {"epoch", epoch},
          {"step", r.steps},
          {"train_loss", epoch_loss / static_cast<double>(batches)},
          {"val_loss", val},
          {"best_val_loss", r.best_val_loss}});
    if (since_best >= cfg.early_stop_patience) {
      r.early_stopped = true;
      break;
    }
  }
  networks::restore(r.best, model);
  emit({{"event", "done"},
        {"steps", r.steps},
        {"epochs", r.epochs},
        {"best_epoch", r.best_epoch},
        {"best_val_loss", r.best_val_loss},
        {"early_stopped", r.early_stopped}});
  return r;
}

enum class MaskMode { kModel, kIdentity, kOracle };

inline MaskMode parse_mask_mode(const std::string& s) {
  if (s == "model") return MaskMode::kModel;
  if (s == "identity") return MaskMode::kIdentity;
  if (s == "oracle") return MaskMode::kOracle;
  throw ConfigError("unknown mask mode '" + s + "' (expected model, identity or oracle)");
}

// SI-SDR before and after extraction for every sample. `model` may be null
// for the identity and oracle modes; the STFT then follows `stft`.
template <typename T>
std::vector<losses::MetricRow> evaluate(networks::Extractor<T>* model, const std::vector<data::MixtureSample>& samples,
                                        MaskMode mode, const dsp::StftConfig& stft, std::size_t batch_size = 8) {
  if (samples.empty()) throw DataError("evaluation set is empty");
  if (mode == MaskMode::kModel && model == nullptr) throw ConfigError("model evaluation needs a checkpoint");
  const dsp::StftConfig cfg = model ? model->stft() : stft;
  std::vector<losses::MetricRow> rows;
  rows.reserve(samples.size());
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    const std::size_t end = std::min(samples.size(), start + batch_size);
    std::vector<networks::Mask> masks;
    std::vector<dsp::Spectrogram> specs;
    for (std::size_t i = start; i < end; ++i) specs.push_back(dsp::stft(samples[i].mixture, cfg));
    if (mode == MaskMode::kModel) {
      ad::NoGradGuard no_grad;
      const std::size_t bins = specs.front().num_bins, frames = specs.front().num_frames;
      std::vector<T> mags, embs;
      std::size_t emb_dim = 0;
      for (std::size_t i = start; i < end; ++i) {
        if (specs[i - start].num_frames != frames) throw DimensionError("evaluation batch differs in length");
        const auto m = specs[i - start].magnitude();
        mags.insert(mags.end(), m.begin(), m.end());
        const auto e = model->embed(samples[i].reference);
        emb_dim = e.size();
        embs.insert(embs.end(), e.begin(), e.end());
      }
      const std::size_t n = end - start;
      const auto out = model->separator().forward(ad::Tensor<T>::from({n, bins, frames}, std::move(mags)),
                                                  ad::Tensor<T>::from({n, emb_dim}, std::move(embs)), false);
      const auto v = out.data();
      for (std::size_t b = 0; b < n; ++b) {
        masks.push_back({bins, frames, {v.begin() + static_cast<std::ptrdiff_t>(b * bins * frames),
                                        v.begin() + static_cast<std::ptrdiff_t>((b + 1) * bins * frames)}});
      }
    } else {
      for (std::size_t i = start; i < end; ++i) {
        const auto& spec = specs[i - start];
        masks.push_back(mode == MaskMode::kIdentity
                            ? networks::unit_mask(spec)
                            : networks::oracle_mask(dsp::stft(samples[i].target, cfg),
                                                    dsp::stft(samples[i].interferer(), cfg)));
      }
    }
    for (std::size_t i = start; i < end; ++i) {
      const auto& s = samples[i];
      auto extracted = networks::apply_mask(specs[i - start], masks[i - start]);
      extracted.resize(s.mixture.size(), 0.0);
      rows.push_back({s.id, losses::si_snr(s.mixture, s.target), losses::si_snr(extracted, s.target)});
    }
  }
  return rows;
}

}  // namespace tse::train
