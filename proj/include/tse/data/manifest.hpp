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

// Dataset manifest: a JSON index of WAV files.
//
//   {
//     "format": "tse-manifest", "version": 1, "sample_rate": 8000,
//     "speakers": ["spk00", ...],
//     "samples": [{"id": "train0000", "split": "train",
//                  "mixture": "wav/train0000_mix.wav",
//                  "target": "wav/train0000_target.wav",
//                  "reference": "wav/train0000_ref.wav",
//                  "target_speaker": "spk03", "interferer_speaker": "spk07"}, ...],
//     "embedder_utterances": [{"path": "wav/emb/emb00_000.wav", "speaker": "emb00"}, ...]
//   }
//
// Paths are relative to the manifest's directory.

#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tse/data/dataset.hpp"
#include "tse/dsp/wav.hpp"
#include "tse/errors.hpp"

namespace tse::data {

namespace fs = std::filesystem;

inline constexpr int kManifestVersion = 1;

namespace detail {

inline dsp::Audio make_audio(const std::vector<double>& x, double rate) {
  return {static_cast<std::uint32_t>(std::lround(rate)), x};
}

inline std::vector<double> load(const fs::path& base, const std::string& rel, double rate) {
  return dsp::read_wav((base / rel).string(), static_cast<std::uint32_t>(std::lround(rate))).samples;
}

}  // namespace detail

// Writes every sample's WAVs and the manifest; returns the manifest path.
inline fs::path write_dataset(const Dataset& ds, const fs::path& out_dir) {
  fs::create_directories(out_dir / "wav" / "emb");
  nlohmann::json j;
  j["format"] = "tse-manifest";
  j["version"] = kManifestVersion;
  j["sample_rate"] = ds.sample_rate;
  j["speakers"] = ds.speaker_names;
  j["samples"] = nlohmann::json::array();
  auto emit = [&](const std::vector<MixtureSample>& split, const std::string& name) {
    for (const auto& s : split) {
      const std::string stem = "wav/" + s.id;
      dsp::write_wav((out_dir / (stem + "_mix.wav")).string(), detail::make_audio(s.mixture, ds.sample_rate));
      dsp::write_wav((out_dir / (stem + "_target.wav")).string(), detail::make_audio(s.target, ds.sample_rate));
      dsp::write_wav((out_dir / (stem + "_ref.wav")).string(), detail::make_audio(s.reference, ds.sample_rate));
      j["samples"].push_back({{"id", s.id},
                              {"split", name},
                              {"mixture", stem + "_mix.wav"},
                              {"target", stem + "_target.wav"},
                              {"reference", stem + "_ref.wav"},
                              {"target_speaker", ds.speaker_names.at(static_cast<std::size_t>(s.target_speaker))},
                              {"interferer_speaker", ds.speaker_names.at(static_cast<std::size_t>(s.interferer_speaker))}});
    }
  };
  emit(ds.train, "train");
  emit(ds.val, "val");
  emit(ds.test, "test");
  j["embedder_utterances"] = nlohmann::json::array();
  std::map<int, int> counter;
  for (const auto& u : ds.embedder_pool) {
    const std::string& spk = ds.speaker_names.at(static_cast<std::size_t>(u.speaker));
    char buf[64];
    std::snprintf(buf, sizeof(buf), "wav/emb/%s_%03d.wav", spk.c_str(), counter[u.speaker]++);
    dsp::write_wav((out_dir / buf).string(), detail::make_audio(u.samples, ds.sample_rate));
    j["embedder_utterances"].push_back({{"path", buf}, {"speaker", spk}});
  }
  const fs::path manifest = out_dir / "manifest.json";
  std::ofstream os(manifest);
  if (!os) throw DataError("cannot write manifest " + manifest.string());
  os << j.dump(2) << '\n';
  return manifest;
}

inline Dataset read_dataset(const fs::path& manifest_path) {
  std::ifstream is(manifest_path);
  if (!is) throw DataError("cannot open manifest " + manifest_path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest " + manifest_path.string() + " is not valid JSON: " + e.what());
  }
  const fs::path base = manifest_path.parent_path();
  Dataset ds;
  try {
    if (j.at("format") != "tse-manifest") throw DataError("not a tse manifest");
    if (j.at("version") != kManifestVersion) {
      throw DataError("unsupported manifest version " + j.at("version").dump());
    }
    ds.sample_rate = j.at("sample_rate");
    ds.speaker_names = j.at("speakers").get<std::vector<std::string>>();
    std::map<std::string, int> ids;
    for (std::size_t i = 0; i < ds.speaker_names.size(); ++i) ids[ds.speaker_names[i]] = static_cast<int>(i);
    auto id_of = [&](const std::string& name) {
      auto it = ids.find(name);
      if (it == ids.end()) throw DataError("manifest names unknown speaker '" + name + "'");
      return it->second;
    };
    for (const auto& e : j.at("samples")) {
      MixtureSample s;
      s.id = e.at("id");
      s.mixture = detail::load(base, e.at("mixture"), ds.sample_rate);
      s.target = detail::load(base, e.at("target"), ds.sample_rate);
      s.reference = detail::load(base, e.at("reference"), ds.sample_rate);
      if (s.mixture.size() != s.target.size()) throw DataError("sample " + s.id + ": mixture and target lengths differ");
      s.target_speaker = id_of(e.at("target_speaker"));
      s.interferer_speaker = id_of(e.at("interferer_speaker"));
      const std::string split = e.at("split");
      if (split == "train") ds.train.push_back(std::move(s));
      else if (split == "val") ds.val.push_back(std::move(s));
      else if (split == "test") ds.test.push_back(std::move(s));
      else throw DataError("sample " + s.id + ": unknown split '" + split + "'");
    }
    if (j.contains("embedder_utterances")) {
      for (const auto& e : j.at("embedder_utterances")) {
        ds.embedder_pool.push_back({id_of(e.at("speaker")), detail::load(base, e.at("path"), ds.sample_rate)});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest " + manifest_path.string() + " is malformed: " + e.what());
  }
  return ds;
}

// Real corpus laid out as <root>/<speaker>/<utterance>.wav. Utterances are
// cut to cfg.duration seconds; shorter files are skipped.
inline Dataset load_corpus(const fs::path& root, const DatasetConfig& cfg) {
  if (!fs::is_directory(root)) throw DataError("corpus root " + root.string() + " is not a directory");
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  const auto rate = static_cast<std::uint32_t>(std::lround(cfg.sample_rate));
  const auto len = static_cast<std::size_t>(std::lround(cfg.duration * cfg.sample_rate));
  SpeakerPool pool;
  std::vector<std::string> names;
  for (const auto& dir : dirs) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".wav") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<std::vector<double>> utts;
    for (const auto& f : files) {
      auto audio = dsp::read_wav(f.string(), rate);
      if (audio.samples.size() < len) continue;
      audio.samples.resize(len);
      utts.push_back(std::move(audio.samples));
      if (utts.size() == cfg.utterances_per_speaker) break;
    }
    if (utts.size() < 3) continue;
    const int id = static_cast<int>(names.size());
    names.push_back(dir.filename().string());
    pool[id] = std::move(utts);
  }
  Rng rng(derive_seed(cfg.seed, 0xc0de));
  Dataset ds = build_from_pool(pool, std::move(names), cfg, rng);
  // The separator's training speakers double as the embedder corpus.
  std::map<int, bool> train_speakers;
  for (const auto& s : ds.train) train_speakers[s.target_speaker] = true;
  for (const auto& [id, utts] : pool) {
    if (!train_speakers.count(id)) continue;
    for (const auto& u : utts) ds.embedder_pool.push_back({id, u});
  }
  return ds;
}

}  // namespace tse::data
