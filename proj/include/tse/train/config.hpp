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

#include <cstddef>
#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "tse/cells/lstm.hpp"
#include "tse/errors.hpp"
#include "tse/json_config.hpp"
#include "tse/losses/losses.hpp"
#include "tse/networks/config.hpp"

namespace tse::train {

enum class Precision { kDouble, kFloat };

inline std::string to_string(Precision p) { return p == Precision::kDouble ? "float64" : "float32"; }

inline Precision parse_precision(const std::string& s) {
  if (s == "float64" || s == "double") return Precision::kDouble;
  if (s == "float32" || s == "float") return Precision::kFloat;
  throw ConfigError("unknown precision '" + s + "' (expected float64 or float32)");
}

// Speaker-embedder pre-training (classification head on the embedder pool).
struct EmbedderTrainConfig {
  std::size_t layers = 3;
  std::size_t hidden = 64;
  std::size_t n_mels = 40;
  std::size_t epochs = 40;
  std::size_t batch_size = 16;
  double learning_rate = 1e-3;
  double crop_seconds = 1.0;
  double grad_clip_norm = 10.0;
  std::uint64_t seed = 1;

  void validate() const {
    if (layers == 0 || hidden == 0 || n_mels == 0 || epochs == 0 || batch_size == 0) {
      throw ConfigError("embedder sizes, epochs and batch size must be positive");
    }
    if (!(learning_rate > 0.0) || !(crop_seconds > 0.0) || !(grad_clip_norm > 0.0)) {
      throw ConfigError("embedder learning rate, crop length and clip norm must be positive");
    }
  }
};

struct TrainConfig {
  losses::LossKind loss = losses::LossKind::si_snr();
  cells::GateWiring wiring = cells::GateWiring::kCustomized;
  double learning_rate = 0.0002;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 50;
  double grad_clip_norm = 10.0;
  std::size_t early_stop_patience = 7;
  double width_factor = 1.0;
  std::uint64_t seed = 1;
  Precision precision = Precision::kDouble;
  std::size_t max_steps = 0;  // 0: bounded by max_epochs only
  EmbedderTrainConfig embedder;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (max_epochs == 0) throw ConfigError("max_epochs must be positive");
    if (!(grad_clip_norm > 0.0)) throw ConfigError("grad_clip_norm must be positive");
    if (early_stop_patience == 0 || early_stop_patience > max_epochs) {
      throw ConfigError("early_stop_patience must lie in [1, max_epochs]");
    }
    if (!(width_factor > 0.0)) throw ConfigError("width_factor must be positive");
    if (loss.is_plc() && !(loss.power > 0.0 && loss.power <= 1.0)) {
      throw ConfigError("PLC power must lie in (0, 1]");
    }
    embedder.validate();
  }

  // Separator sizes for a given bin count.
  networks::SeparatorConfig separator(std::size_t bins) const {
    networks::SeparatorConfig c;
    c.bins = bins;
    c = c.scaled(width_factor);
    c.wiring = wiring;
    return c;
  }

  networks::EmbedderConfig embedder_model() const {
    return {embedder.n_mels, embedder.layers, embedder.hidden, separator(1).embed_dim};
  }
};

inline void to_json(nlohmann::json& j, const EmbedderTrainConfig& c) {
  j = {{"layers", c.layers},         {"hidden", c.hidden},
       {"n_mels", c.n_mels},         {"epochs", c.epochs},
       {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate},
       {"crop_seconds", c.crop_seconds}, {"grad_clip_norm", c.grad_clip_norm},
       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, EmbedderTrainConfig& c) {
  namespace jc = json_config;
  const std::string s = "train.embedder";
  jc::check_keys(j, {"layers", "hidden", "n_mels", "epochs", "batch_size", "learning_rate", "crop_seconds",
                     "grad_clip_norm", "seed"},
                 s);
  jc::read(j, "layers", c.layers, s);
  jc::read(j, "hidden", c.hidden, s);
  jc::read(j, "n_mels", c.n_mels, s);
  jc::read(j, "epochs", c.epochs, s);
  jc::read(j, "batch_size", c.batch_size, s);
  jc::read(j, "learning_rate", c.learning_rate, s);
  jc::read(j, "crop_seconds", c.crop_seconds, s);
  jc::read(j, "grad_clip_norm", c.grad_clip_norm, s);
  jc::read(j, "seed", c.seed, s);
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"loss", c.loss.name()},
       {"plc_power", c.loss.power},
       {"wiring", cells::to_string(c.wiring)},
       {"learning_rate", c.learning_rate},
       {"batch_size", c.batch_size},
       {"max_epochs", c.max_epochs},
       {"grad_clip_norm", c.grad_clip_norm},
       {"early_stop_patience", c.early_stop_patience},
       {"width_factor", c.width_factor},
       {"seed", c.seed},
       {"precision", to_string(c.precision)},
       {"max_steps", c.max_steps},
       {"embedder", c.embedder}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  namespace jc = json_config;
  const std::string s = "train";
  jc::check_keys(j, {"loss", "plc_power", "wiring", "learning_rate", "batch_size", "max_epochs", "grad_clip_norm",
                     "early_stop_patience", "width_factor", "seed", "precision", "max_steps", "embedder"},
                 s);
  std::string name = c.loss.name();
  double power = c.loss.power;
  jc::read(j, "loss", name, s);
  jc::read(j, "plc_power", power, s);
  c.loss = losses::LossKind::parse(name);
  if (c.loss.is_plc()) c.loss = losses::LossKind::plc(power);
  std::string wiring = cells::to_string(c.wiring);
  jc::read(j, "wiring", wiring, s);
  c.wiring = cells::parse_wiring(wiring);
  jc::read(j, "learning_rate", c.learning_rate, s);
  jc::read(j, "batch_size", c.batch_size, s);
  jc::read(j, "max_epochs", c.max_epochs, s);
  jc::read(j, "grad_clip_norm", c.grad_clip_norm, s);
  jc::read(j, "early_stop_patience", c.early_stop_patience, s);
  jc::read(j, "width_factor", c.width_factor, s);
  jc::read(j, "seed", c.seed, s);
  std::string precision = to_string(c.precision);
  jc::read(j, "precision", precision, s);
  c.precision = parse_precision(precision);
  jc::read(j, "max_steps", c.max_steps, s);
  if (j.contains("embedder")) {
    EmbedderTrainConfig e = c.embedder;
    from_json(j.at("embedder"), e);
    c.embedder = e;
  }
}

}  // namespace tse::train
