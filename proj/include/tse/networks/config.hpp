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

// Layer-size configuration for the separator and the speaker embedder.

#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <string>

#include <nlohmann/json.hpp>

#include "tse/cells/lstm.hpp"
#include "tse/errors.hpp"

namespace tse::networks {

struct ConvSpec {
  std::size_t kernel_rows = 1;  // frequency extent
  std::size_t kernel_cols = 1;  // time extent
  std::size_t dilation_rows = 1;
  std::size_t dilation_cols = 1;
  std::size_t filters = 1;

  bool operator==(const ConvSpec&) const = default;
};

// Separator in its full-size form: eight dilated conv layers, an LSTM of
// 600 units, FC1 with 514 units and an FC2 mask layer with one unit per
// frequency bin. The input is a bins × frames magnitude spectrogram, so the
// first kernel axis runs over frequency.
struct SeparatorConfig {
  std::size_t bins = 257;
  std::array<ConvSpec, 8> convs{{
      {1, 7, 1, 1, 64},
      {7, 1, 1, 1, 64},
      {5, 5, 1, 1, 64},
      {5, 5, 2, 1, 64},
      {5, 5, 4, 1, 64},
      {5, 5, 8, 1, 64},
      {5, 5, 16, 1, 64},
      {1, 1, 1, 1, 8},
  }};
  std::size_t lstm_hidden = 600;
  std::size_t fc1 = 514;
  std::size_t embed_dim = 256;
  cells::GateWiring wiring = cells::GateWiring::kCustomized;

  // Per-frame LSTM feature width: last conv's channels times bins.
  std::size_t feature_size() const { return convs.back().filters * bins; }

  // Multiplies the conv widths of layers 1-7, the LSTM, FC1 and the
  // embedding width by `width` (rounded, at least 1). The Conv8 bottleneck
  // and the FC2 width (= bins) are structural and stay fixed.
  SeparatorConfig scaled(double width) const {
    if (!(width > 0.0)) throw ConfigError("width factor must be positive");
    auto s = [width](std::size_t v) {
      return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(v) * width)));
    };
    SeparatorConfig c = *this;
    for (std::size_t i = 0; i + 1 < c.convs.size(); ++i) c.convs[i].filters = s(convs[i].filters);
    c.lstm_hidden = s(lstm_hidden);
    c.fc1 = s(fc1);
    c.embed_dim = s(embed_dim);
    return c;
  }

  void validate() const {
    if (bins == 0 || lstm_hidden == 0 || fc1 == 0 || embed_dim == 0) {
      throw ConfigError("separator sizes must be positive");
    }
    for (const auto& cv : convs) {
      if (cv.filters == 0 || cv.kernel_rows % 2 == 0 || cv.kernel_cols % 2 == 0 ||
          cv.dilation_rows == 0 || cv.dilation_cols == 0) {
        throw ConfigError("separator conv layers need odd kernels and positive filters/dilations");
      }
    }
  }

  bool operator==(const SeparatorConfig&) const = default;
};

// Speaker embedder: stacked LSTM over log-mel frames, projection of the
// last hidden state, L2 normalization. Full size is 3 × 768 into 256.
struct EmbedderConfig {
  std::size_t n_mels = 40;
  std::size_t layers = 3;
  std::size_t hidden = 768;
  std::size_t embed_dim = 256;

  EmbedderConfig scaled(double width) const {
    if (!(width > 0.0)) throw ConfigError("width factor must be positive");
    auto s = [width](std::size_t v) {
      return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(v) * width)));
    };
    EmbedderConfig c = *this;
    c.hidden = s(hidden);
    c.embed_dim = s(embed_dim);
    return c;
  }

  void validate() const {
    if (n_mels == 0 || layers == 0 || hidden == 0 || embed_dim == 0) {
      throw ConfigError("embedder sizes must be positive");
    }
  }

  bool operator==(const EmbedderConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const ConvSpec& c) {
  j = {{"kernel", {c.kernel_rows, c.kernel_cols}},
       {"dilation", {c.dilation_rows, c.dilation_cols}},
       {"filters", c.filters}};
}

inline void from_json(const nlohmann::json& j, ConvSpec& c) {
  c.kernel_rows = j.at("kernel").at(0);
  c.kernel_cols = j.at("kernel").at(1);
  c.dilation_rows = j.at("dilation").at(0);
  c.dilation_cols = j.at("dilation").at(1);
  c.filters = j.at("filters");
}

inline void to_json(nlohmann::json& j, const SeparatorConfig& c) {
  j = {{"bins", c.bins},
       {"convs", c.convs},
       {"lstm_hidden", c.lstm_hidden},
       {"fc1", c.fc1},
       {"embed_dim", c.embed_dim},
       {"wiring", cells::to_string(c.wiring)}};
}

inline void from_json(const nlohmann::json& j, SeparatorConfig& c) {
  c.bins = j.at("bins");
  c.convs = j.at("convs").get<std::array<ConvSpec, 8>>();
  c.lstm_hidden = j.at("lstm_hidden");
  c.fc1 = j.at("fc1");
  c.embed_dim = j.at("embed_dim");
  c.wiring = cells::parse_wiring(j.at("wiring").get<std::string>());
}

inline void to_json(nlohmann::json& j, const EmbedderConfig& c) {
  j = {{"n_mels", c.n_mels}, {"layers", c.layers}, {"hidden", c.hidden}, {"embed_dim", c.embed_dim}};
}

inline void from_json(const nlohmann::json& j, EmbedderConfig& c) {
  c.n_mels = j.at("n_mels");
  c.layers = j.at("layers");
  c.hidden = j.at("hidden");
  c.embed_dim = j.at("embed_dim");
}

}  // namespace tse::networks
