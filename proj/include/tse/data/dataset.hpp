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

// Two-speaker mixtures y = x_target + x_interferer with a reference
// utterance of the target speaker that is not part of the mixture.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tse/data/synth.hpp"
#include "tse/dsp/wav.hpp"
#include "tse/errors.hpp"
#include "tse/json_config.hpp"
#include "tse/rng.hpp"

namespace tse::data {

struct MixtureSample {
  std::string id;
  std::vector<double> mixture;
  std::vector<double> target;
  std::vector<double> reference;
  int target_speaker = -1;
  int interferer_speaker = -1;
  // Utterance indices within each speaker's pool.
  int target_utterance = -1;
  int interferer_utterance = -1;
  int reference_utterance = -1;

  std::vector<double> interferer() const {
    std::vector<double> out(mixture.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = mixture[i] - target[i];
    return out;
  }
};

// Utterance with its speaker label, as used for embedder training.
struct LabeledUtterance {
  int speaker = -1;
  std::vector<double> samples;
};

struct Dataset {
  double sample_rate = 8000.0;
  std::vector<std::string> speaker_names;  // index = speaker id
  std::vector<MixtureSample> train, val, test;
  std::vector<LabeledUtterance> embedder_pool;
};

// Sample-wise sum of two equal-length signals.
inline std::vector<double> mix(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) {
    throw DimensionError("mix: signal lengths differ (" + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()) + ")");
  }
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

struct DatasetConfig {
  std::size_t num_speakers = 12;
  std::size_t utterances_per_speaker = 20;
  double duration = 2.0;
  double sample_rate = 8000.0;
  std::size_t test_speakers = 4;
  double val_utterance_fraction = 0.2;
  std::size_t train_samples = 1600;
  std::size_t val_samples = 32;
  std::size_t test_samples = 40;
  // Separate synthetic speakers for embedder training.
  std::size_t embedder_speakers = 96;
  std::size_t embedder_utterances = 5;
  std::uint64_t seed = 1;

  void validate() const {
    if (num_speakers < 2) throw ConfigError("dataset needs at least 2 speakers");
    if (test_speakers == 0 || num_speakers - test_speakers < 2 || test_speakers < 2) {
      throw ConfigError("dataset needs at least 2 training and 2 test speakers");
    }
    if (utterances_per_speaker < 3) throw ConfigError("dataset needs at least 3 utterances per speaker");
    if (!(duration > 0.0) || !(sample_rate > 0.0)) throw ConfigError("duration and sample rate must be positive");
  }
};

// Utterances grouped by speaker id.
using SpeakerPool = std::map<int, std::vector<std::vector<double>>>;

namespace detail {

inline void quantize(std::vector<double>& x) {
  for (double& v : x) v = dsp::quantize_pcm16(v);
}

// Mixture whose sum still fits the 16-bit range, so that file round trips
// keep mixture - target == interferer exactly.
inline bool fits_pcm16(const std::vector<double>& x) {
  return std::all_of(x.begin(), x.end(), [](double v) { return v >= -1.0 && v <= 32767.0 / 32768.0; });
}

// Draws `count` samples from `speakers` using utterance indices `utts`.
inline std::vector<MixtureSample> draw_samples(const SpeakerPool& pool, const std::vector<int>& speakers,
                                               const std::vector<int>& utts, std::size_t count, Rng& rng,
                                               const std::string& prefix) {
  std::vector<MixtureSample> out;
  out.reserve(count);
  std::size_t attempts = 0;
  while (out.size() < count) {
    if (++attempts > 100 * (count + 1)) throw DataError("could not draw non-clipping mixtures");
    const int tgt = speakers[rng.index(speakers.size())];
    int itf = speakers[rng.index(speakers.size() - 1)];
    if (itf == tgt) itf = speakers.back();
    const int ua = utts[rng.index(utts.size())];
    const int ub = utts[rng.index(utts.size())];
    int uc = utts[rng.index(utts.size() - 1)];
    if (uc == ua) uc = utts.back();
    const auto& t_utts = pool.at(tgt);
    const auto& i_utts = pool.at(itf);
    MixtureSample s;
    s.target = t_utts.at(static_cast<std::size_t>(ua));
    s.mixture = mix(s.target, i_utts.at(static_cast<std::size_t>(ub)));
    if (!fits_pcm16(s.mixture)) continue;
    s.reference = t_utts.at(static_cast<std::size_t>(uc));
    s.target_speaker = tgt;
    s.interferer_speaker = itf;
    s.target_utterance = ua;
    s.interferer_utterance = ub;
    s.reference_utterance = uc;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%04zu", prefix.c_str(), out.size());
    s.id = buf;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace detail

// Splits speakers into train (seen) and test (unseen) sets, then draws
// mixtures: train from the first utterances of train speakers, val from
// their held-out utterances, test from the test speakers.
inline Dataset build_from_pool(const SpeakerPool& pool, std::vector<std::string> names,
                               const DatasetConfig& cfg, Rng& rng) {
  if (pool.size() < 2) throw ConfigError("dataset needs at least 2 speakers");
  std::vector<int> speakers;
  for (const auto& [id, utts] : pool) speakers.push_back(id);
  rng.shuffle(speakers);
  const std::size_t n_test = std::min(cfg.test_speakers, speakers.size() - 2);
  if (n_test < 2) throw ConfigError("dataset needs at least 2 training and 2 test speakers");
  std::vector<int> test_spk(speakers.begin(), speakers.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<int> train_spk(speakers.begin() + static_cast<std::ptrdiff_t>(n_test), speakers.end());
  std::sort(test_spk.begin(), test_spk.end());
  std::sort(train_spk.begin(), train_spk.end());

  std::size_t per = pool.begin()->second.size();
  for (const auto& [id, utts] : pool) per = std::min(per, utts.size());
  if (per < 3) throw ConfigError("every speaker needs at least 3 utterances");
  auto n_val = static_cast<std::size_t>(std::lround(cfg.val_utterance_fraction * static_cast<double>(per)));
  n_val = std::clamp<std::size_t>(n_val, 2, per - 2);
  std::vector<int> train_utts, val_utts, all_utts;
  for (std::size_t u = 0; u < per; ++u) {
    (u < per - n_val ? train_utts : val_utts).push_back(static_cast<int>(u));
    all_utts.push_back(static_cast<int>(u));
  }

  Dataset ds;
  ds.sample_rate = cfg.sample_rate;
  ds.speaker_names = std::move(names);
  ds.train = detail::draw_samples(pool, train_spk, train_utts, cfg.train_samples, rng, "train");
  ds.val = detail::draw_samples(pool, train_spk, val_utts, cfg.val_samples, rng, "val");
  ds.test = detail::draw_samples(pool, test_spk, all_utts, cfg.test_samples, rng, "test");
  return ds;
}

// Synthetic corpus; a pure function of the config (seed included).
inline Dataset build_dataset(const DatasetConfig& cfg) {
  cfg.validate();
  const auto speakers = make_speakers(cfg.num_speakers, cfg.seed);
  SpeakerPool pool;
  std::vector<std::string> names;
  for (const auto& spk : speakers) {
    auto& utts = pool[spk.id];
    for (std::size_t u = 0; u < cfg.utterances_per_speaker; ++u) {
      auto x = synth_utterance(spk, cfg.duration, cfg.sample_rate,
                               derive_seed(cfg.seed, static_cast<std::uint64_t>(spk.id) + 1, u));
      detail::quantize(x);
      utts.push_back(std::move(x));
    }
    char buf[16];
    std::snprintf(buf, sizeof(buf), "spk%02d", spk.id);
    names.emplace_back(buf);
  }
  Rng rng(derive_seed(cfg.seed, 0xda7a));
  Dataset ds = build_from_pool(pool, std::move(names), cfg, rng);

  const int first_embedder_id = static_cast<int>(ds.speaker_names.size());
  if (cfg.embedder_speakers > 0) {
    const auto emb_speakers = make_speakers(cfg.embedder_speakers, derive_seed(cfg.seed, 0xe111));
    for (const auto& spk : emb_speakers) {
      const int id = first_embedder_id + spk.id;
      char buf[16];
      std::snprintf(buf, sizeof(buf), "emb%02d", spk.id);
      ds.speaker_names.emplace_back(buf);
      for (std::size_t u = 0; u < cfg.embedder_utterances; ++u) {
        auto x = synth_utterance(spk, cfg.duration, cfg.sample_rate,
                                 derive_seed(cfg.seed ^ 0xe111e111ULL, static_cast<std::uint64_t>(id) + 1, u));
        detail::quantize(x);
        ds.embedder_pool.push_back({id, std::move(x)});
      }
    }
  }
  return ds;
}

inline void to_json(nlohmann::json& j, const DatasetConfig& c) {
  j = {{"num_speakers", c.num_speakers},
       {"utterances_per_speaker", c.utterances_per_speaker},
       {"duration", c.duration},
       {"sample_rate", c.sample_rate},
       {"test_speakers", c.test_speakers},
       {"val_utterance_fraction", c.val_utterance_fraction},
       {"train_samples", c.train_samples},
       {"val_samples", c.val_samples},
       {"test_samples", c.test_samples},
       {"embedder_speakers", c.embedder_speakers},
       {"embedder_utterances", c.embedder_utterances},
       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, DatasetConfig& c) {
  namespace jc = json_config;
  const std::string s = "data";
  jc::check_keys(j,
                 {"num_speakers", "utterances_per_speaker", "duration", "sample_rate", "test_speakers",
                  "val_utterance_fraction", "train_samples", "val_samples", "test_samples",
                  "embedder_speakers", "embedder_utterances", "seed"},
                 s);
  jc::read(j, "num_speakers", c.num_speakers, s);
  jc::read(j, "utterances_per_speaker", c.utterances_per_speaker, s);
  jc::read(j, "duration", c.duration, s);
  jc::read(j, "sample_rate", c.sample_rate, s);
  jc::read(j, "test_speakers", c.test_speakers, s);
  jc::read(j, "val_utterance_fraction", c.val_utterance_fraction, s);
  jc::read(j, "train_samples", c.train_samples, s);
  jc::read(j, "val_samples", c.val_samples, s);
  jc::read(j, "test_samples", c.test_samples, s);
  jc::read(j, "embedder_speakers", c.embedder_speakers, s);
  jc::read(j, "embedder_utterances", c.embedder_utterances, s);
  jc::read(j, "seed", c.seed, s);
}

}  // namespace tse::data
