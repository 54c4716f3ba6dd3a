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

// Checkpoint container.
//
//   bytes 0-7   magic "TSECKPT\0"
//   bytes 8-11  format version (uint32, little endian)
//   bytes 12-19 header length H (uint64)
//   H bytes     JSON header: model configs, training config, tensor index
//   rest        float64 tensor data, little endian, at the indexed offsets
//
// Tensor names follow the parameter names of the separator ("conv1.kernel",
// "lstm.W_e", ...) and embedder ("embedder.lstm1.W_i", ...), plus batch-norm
// running statistics ("conv1.bn.running_mean", "conv1.bn.running_var").

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tse/cells/lstm.hpp"
#include "tse/dsp/stft.hpp"
#include "tse/errors.hpp"
#include "tse/networks/config.hpp"
#include "tse/networks/extractor.hpp"

namespace tse::dsp {

inline void to_json(nlohmann::json& j, const StftConfig& c) {
  j = {{"fft_size", c.fft_size},
       {"frame_length", c.frame_length},
       {"frame_shift", c.frame_shift},
       {"window", c.window == Window::kSqrtHann ? "sqrt-hann" : "hann"},
       {"sample_rate", c.sample_rate}};
}

inline void from_json(const nlohmann::json& j, StftConfig& c) {
  c.fft_size = j.at("fft_size");
  c.frame_length = j.at("frame_length");
  c.frame_shift = j.at("frame_shift");
  const std::string w = j.at("window");
  if (w == "sqrt-hann") c.window = Window::kSqrtHann;
  else if (w == "hann") c.window = Window::kHann;
  else throw tse::DataError("unknown window '" + w + "'");
  c.sample_rate = j.at("sample_rate");
}

}  // namespace tse::dsp

namespace tse::networks {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little endian");

inline constexpr char kCheckpointMagic[8] = {'T', 'S', 'E', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct StoredTensor {
  ad::Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  SeparatorConfig separator;
  EmbedderConfig embedder;
  dsp::StftConfig stft;
  nlohmann::json extra = nlohmann::json::object();  // training config and run metadata
  std::map<std::string, StoredTensor> tensors;
};

namespace ckpt_detail {

template <typename T>
void put(Checkpoint& ck, const std::string& name, const ad::Tensor<T>& t) {
  ck.tensors[name] = {t.shape(), {t.data().begin(), t.data().end()}};
}

template <typename T>
void take(const Checkpoint& ck, const std::string& name, const ad::Tensor<T>& t) {
  auto it = ck.tensors.find(name);
  if (it == ck.tensors.end()) throw DataError("checkpoint is missing tensor '" + name + "'");
  if (it->second.shape != t.shape()) {
    throw DataError("checkpoint tensor '" + name + "' has shape " + ad::shape_string(it->second.shape) +
                    ", model expects " + ad::shape_string(t.shape()));
  }
  auto dst = t.mutable_data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(it->second.values[i]);
}

inline void put_stats(Checkpoint& ck, const std::string& prefix, const ad::BatchNormStats& s) {
  ck.tensors[prefix + ".running_mean"] = {{s.mean.size()}, s.mean};
  ck.tensors[prefix + ".running_var"] = {{s.var.size()}, s.var};
}

inline void take_stats(const Checkpoint& ck, const std::string& prefix, ad::BatchNormStats& s) {
  for (auto [suffix, dst] : {std::pair{".running_mean", &s.mean}, std::pair{".running_var", &s.var}}) {
    auto it = ck.tensors.find(prefix + suffix);
    if (it == ck.tensors.end() || it->second.values.size() != dst->size()) {
      throw DataError("checkpoint is missing batch-norm statistics '" + prefix + suffix + "'");
    }
    *dst = it->second.values;
  }
}

}  // namespace ckpt_detail

template <typename T>
Checkpoint make_checkpoint(const Extractor<T>& model, nlohmann::json extra = nlohmann::json::object()) {
  Checkpoint ck;
  ck.separator = model.separator().config();
  ck.embedder = model.embedder().config();
  ck.stft = model.stft();
  ck.extra = std::move(extra);
  for (const auto& [name, t] : model.separator().parameters()) ckpt_detail::put(ck, name, t);
  const auto stats = model.separator().batch_norm_stats();
  for (std::size_t i = 0; i < stats.size(); ++i) {
    ckpt_detail::put_stats(ck, "conv" + std::to_string(i + 1) + ".bn", *stats[i]);
  }
  for (const auto& [name, t] : model.embedder().parameters(false)) ckpt_detail::put(ck, name, t);
  return ck;
}

// Copies checkpoint tensors into a model of matching configuration.
template <typename T>
void restore(const Checkpoint& ck, Extractor<T>& model) {
  if (ck.separator.wiring != model.separator().config().wiring) {
    throw ConfigError("checkpoint uses " + cells::to_string(ck.separator.wiring) +
                      " LSTM wiring but the model is " + cells::to_string(model.separator().config().wiring));
  }
  for (const auto& [name, t] : model.separator().parameters()) ckpt_detail::take(ck, name, t);
  auto stats = model.separator().batch_norm_stats();
  for (std::size_t i = 0; i < stats.size(); ++i) {
    ckpt_detail::take_stats(ck, "conv" + std::to_string(i + 1) + ".bn", *stats[i]);
  }
  for (const auto& [name, t] : model.embedder().parameters(false)) ckpt_detail::take(ck, name, t);
}

// Builds a model from a checkpoint. If `expected_wiring` is given and
// differs from the stored one, loading fails.
template <typename T>
Extractor<T> load_model(const Checkpoint& ck, std::optional<cells::GateWiring> expected_wiring = std::nullopt) {
  if (expected_wiring && *expected_wiring != ck.separator.wiring) {
    throw ConfigError("checkpoint uses " + cells::to_string(ck.separator.wiring) +
                      " LSTM wiring, requested " + cells::to_string(*expected_wiring));
  }
  Rng rng(0);
  Extractor<T> model(ck.separator, ck.embedder, ck.stft, rng);
  restore(ck, model);
  return model;
}

// Embedder-only container (same file format, separator section unused).
template <typename T>
Checkpoint make_embedder_checkpoint(const Embedder<T>& embedder, const dsp::StftConfig& stft,
                                    nlohmann::json extra = nlohmann::json::object()) {
  Checkpoint ck;
  ck.embedder = embedder.config();
  ck.stft = stft;
  ck.extra = std::move(extra);
  ck.extra["kind"] = "embedder";
  for (const auto& [name, t] : embedder.parameters(false)) ckpt_detail::put(ck, name, t);
  return ck;
}

template <typename T>
void restore_embedder(const Checkpoint& ck, Embedder<T>& embedder) {
  if (!(ck.embedder == embedder.config())) {
    throw ConfigError("embedder checkpoint sizes (hidden " + std::to_string(ck.embedder.hidden) + ", embed " +
                      std::to_string(ck.embedder.embed_dim) + ") differ from the configured embedder (hidden " +
                      std::to_string(embedder.config().hidden) + ", embed " +
                      std::to_string(embedder.config().embed_dim) + ")");
  }
  for (const auto& [name, t] : embedder.parameters(false)) ckpt_detail::take(ck, name, t);
}

inline std::string encode_checkpoint(const Checkpoint& ck) {
  nlohmann::json header;
  header["separator"] = ck.separator;
  header["embedder"] = ck.embedder;
  header["stft"] = ck.stft;
  header["extra"] = ck.extra;
  header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : ck.tensors) {
    header["tensors"].push_back({{"name", name}, {"shape", t.shape}, {"offset", offset}});
    offset += t.values.size();
  }
  const std::string h = header.dump();
  std::string out(kCheckpointMagic, 8);
  const std::uint32_t version = kCheckpointVersion;
  const std::uint64_t hlen = h.size();
  out.append(reinterpret_cast<const char*>(&version), 4);
  out.append(reinterpret_cast<const char*>(&hlen), 8);
  out += h;
  for (const auto& [name, t] : ck.tensors) {
    out.append(reinterpret_cast<const char*>(t.values.data()), t.values.size() * sizeof(double));
  }
  return out;
}

inline Checkpoint decode_checkpoint(const std::string& bytes, const std::string& name = "<memory>") {
  auto fail = [&](const std::string& why) { return DataError("checkpoint " + name + ": " + why); };
  if (bytes.size() < 20 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) throw fail("bad magic");
  std::uint32_t version = 0;
  std::uint64_t hlen = 0;
  std::memcpy(&version, bytes.data() + 8, 4);
  std::memcpy(&hlen, bytes.data() + 12, 8);
  if (version != kCheckpointVersion) throw fail("unsupported version " + std::to_string(version));
  if (20 + hlen > bytes.size()) throw fail("truncated header");
  Checkpoint ck;
  try {
    const auto header = nlohmann::json::parse(bytes.substr(20, hlen));
    ck.separator = header.at("separator").get<SeparatorConfig>();
    ck.embedder = header.at("embedder").get<EmbedderConfig>();
    ck.stft = header.at("stft").get<dsp::StftConfig>();
    ck.extra = header.at("extra");
    const std::size_t data_start = 20 + hlen;
    for (const auto& e : header.at("tensors")) {
      StoredTensor t;
      t.shape = e.at("shape").get<ad::Shape>();
      const std::uint64_t off = e.at("offset");
      const std::size_t count = ad::shape_numel(t.shape);
      const std::size_t begin = data_start + off * sizeof(double);
      if (begin + count * sizeof(double) > bytes.size()) throw fail("truncated tensor data");
      t.values.resize(count);
      std::memcpy(t.values.data(), bytes.data() + begin, count * sizeof(double));
      ck.tensors[e.at("name").get<std::string>()] = std::move(t);
    }
  } catch (const nlohmann::json::exception& e) {
    throw fail(std::string("malformed header: ") + e.what());
  }
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write checkpoint " + path);
  const std::string bytes = encode_checkpoint(ck);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw DataError("failed writing checkpoint " + path);
}

inline Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + path);
  const std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes, path);
}

}  // namespace tse::networks
