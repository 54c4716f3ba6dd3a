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

// LSTM cells for speaker-conditioned extraction.
//
// Each step consumes three input blocks: the previous hidden state h, the
// per-frame mixture features r and the target-speaker embedding e. Gate
// weights are stored with columns ordered [h | r | e].
//
//   standard:   f = sigmoid(W_f [h, r, e] + b_f)
//   customized: f = sigmoid(W_e [h, e] + b_e)
//
// The input gate, output gate and cell candidate always see [h, r, e]:
//   i = sigmoid(W_i [h, r, e] + b_i)
//   g = tanh(W_c [h, r, e] + b_c)
//   o = sigmoid(W_o [h, r, e] + b_o)
//   c' = f * c + i * g
//   h' = o * tanh(c')
//
// All tensors are row-batched: h and c are N×H, r is N×F, e is N×E.

#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "tse/autodiff/ops.hpp"
#include "tse/autodiff/tensor.hpp"
#include "tse/errors.hpp"
#include "tse/rng.hpp"

namespace tse::cells {

using ad::Tensor;

enum class GateWiring {
  kStandard,    // forget gate reads [h, r, e]
  kCustomized,  // forget gate reads [h, e] only
};

inline std::string to_string(GateWiring w) {
  return w == GateWiring::kStandard ? "standard" : "customized";
}

inline GateWiring parse_wiring(const std::string& s) {
  if (s == "standard") return GateWiring::kStandard;
  if (s == "customized") return GateWiring::kCustomized;
  throw ConfigError("unknown gate wiring '" + s + "' (expected standard or customized)");
}

template <typename T>
struct LstmParams {
  GateWiring wiring = GateWiring::kStandard;
  std::size_t hidden_size = 0;
  std::size_t feature_size = 0;
  std::size_t embed_size = 0;

  // W_f for the standard wiring, W_e for the customized one.
  Tensor<T> w_forget, w_input, w_cell, w_output;
  Tensor<T> b_forget, b_input, b_cell, b_output;

  std::size_t full_width() const { return hidden_size + feature_size + embed_size; }
  std::size_t forget_width() const {
    return wiring == GateWiring::kStandard ? full_width() : hidden_size + embed_size;
  }

  static LstmParams zeros(GateWiring wiring, std::size_t hidden, std::size_t features,
                          std::size_t embed) {
    if (wiring == GateWiring::kCustomized && embed == 0) {
      throw ConfigError("customized LSTM wiring needs a nonzero embedding size");
    }
    LstmParams p;
    p.wiring = wiring;
    p.hidden_size = hidden;
    p.feature_size = features;
    p.embed_size = embed;
    p.w_forget = Tensor<T>::zeros({hidden, p.forget_width()}, true);
    p.w_input = Tensor<T>::zeros({hidden, p.full_width()}, true);
    p.w_cell = Tensor<T>::zeros({hidden, p.full_width()}, true);
    p.w_output = Tensor<T>::zeros({hidden, p.full_width()}, true);
    p.b_forget = Tensor<T>::zeros({hidden}, true);
    p.b_input = Tensor<T>::zeros({hidden}, true);
    p.b_cell = Tensor<T>::zeros({hidden}, true);
    p.b_output = Tensor<T>::zeros({hidden}, true);
    return p;
  }

  // Weights uniform in ±1/sqrt(fan_in); biases zero except the forget bias,
  // which starts at 1.
  static LstmParams init(GateWiring wiring, std::size_t hidden, std::size_t features,
                         std::size_t embed, Rng& rng) {
    LstmParams p = zeros(wiring, hidden, features, embed);
    for (const Tensor<T>* w : {&p.w_forget, &p.w_input, &p.w_cell, &p.w_output}) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(w->dim(1)));
      for (T& v : w->mutable_data()) v = static_cast<T>(rng.uniform(-bound, bound));
    }
    for (T& v : p.b_forget.mutable_data()) v = T(1);
    return p;
  }

  std::string forget_name() const { return wiring == GateWiring::kStandard ? "W_f" : "W_e"; }
  std::string forget_bias_name() const { return wiring == GateWiring::kStandard ? "b_f" : "b_e"; }

  std::vector<std::pair<std::string, Tensor<T>>> named() const {
    return {{forget_name(), w_forget}, {"W_i", w_input},       {"W_c", w_cell},
            {"W_o", w_output},         {forget_bias_name(), b_forget}, {"b_i", b_input},
            {"b_c", b_cell},           {"b_o", b_output}};
  }

  std::vector<Tensor<T>> tensors() const {
    std::vector<Tensor<T>> out;
    for (auto& [name, t] : named()) out.push_back(t);
    return out;
  }
};

template <typename T>
struct LstmState {
  Tensor<T> h;
  Tensor<T> c;

  static LstmState zeros(std::size_t batch, std::size_t hidden) {
    return {Tensor<T>::zeros({batch, hidden}), Tensor<T>::zeros({batch, hidden})};
  }
};

// Gate activations of one step, for inspection.
template <typename T>
struct StepTrace {
  Tensor<T> forget, input, candidate, output;
  LstmState<T> state;
};

namespace detail {

template <typename T>
void check_block(const Tensor<T>& x, std::size_t batch, std::size_t width, const char* what) {
  if (width == 0) return;
  if (!x.defined() || x.rank() != 2 || x.dim(0) != batch || x.dim(1) != width) {
    throw DimensionError(std::string("LSTM ") + what + ": expected [" + std::to_string(batch) +
                         ", " + std::to_string(width) + "], got " +
                         (x.defined() ? ad::shape_string(x.shape()) : std::string("none")));
  }
}

// Time-invariant part of a gate pre-activation: e-block product plus bias,
// repeated over the batch.
template <typename T>
Tensor<T> embedding_term(const Tensor<T>& e, const Tensor<T>& w, const Tensor<T>& b,
                         std::size_t e_offset, std::size_t batch) {
  if (e.defined() && e.numel() > 0) return ad::add_row(ad::matmul_cols_t(e, w, e_offset), b);
  return ad::add_row(Tensor<T>::zeros({batch, b.numel()}), b);
}

// Input-driven terms for the four gates (forget, input, candidate, output)
// in [rows × H] form; r_rows is rows×F or empty, e_term is per batch row.
template <typename T>
struct GateInputs {
  std::array<Tensor<T>, 4> feature;  // r-block products, rows×H (undefined if F == 0)
  std::array<Tensor<T>, 4> embed;    // e-block product + bias, N×H
};

template <typename T>
std::array<const Tensor<T>*, 4> gate_weights(const LstmParams<T>& p) {
  return {&p.w_forget, &p.w_input, &p.w_cell, &p.w_output};
}
template <typename T>
std::array<const Tensor<T>*, 4> gate_biases(const LstmParams<T>& p) {
  return {&p.b_forget, &p.b_input, &p.b_cell, &p.b_output};
}

template <typename T>
GateInputs<T> gate_inputs(const LstmParams<T>& p, const Tensor<T>& r_rows, const Tensor<T>& e,
                          std::size_t batch) {
  GateInputs<T> gi;
  const auto ws = gate_weights(p);
  const auto bs = gate_biases(p);
  const std::size_t h = p.hidden_size, f = p.feature_size;
  for (std::size_t g = 0; g < 4; ++g) {
    const bool forget_customized = g == 0 && p.wiring == GateWiring::kCustomized;
    if (f > 0 && !forget_customized) gi.feature[g] = ad::matmul_cols_t(r_rows, *ws[g], h);
    const std::size_t e_offset = forget_customized ? h : h + f;
    gi.embed[g] = embedding_term(e, *ws[g], *bs[g], e_offset, batch);
  }
  return gi;
}

template <typename T>
StepTrace<T> step_with(const LstmParams<T>& p, const LstmState<T>& prev,
                       const std::array<Tensor<T>, 4>& feature_t,
                       const std::array<Tensor<T>, 4>& embed) {
  const auto ws = gate_weights(p);
  std::array<Tensor<T>, 4> pre;
  for (std::size_t g = 0; g < 4; ++g) {
    Tensor<T> x = feature_t[g].defined() ? ad::add(feature_t[g], embed[g]) : embed[g];
    pre[g] = ad::add(ad::matmul_cols_t(prev.h, *ws[g], 0), x);
  }
  StepTrace<T> t;
  t.forget = ad::sigmoid(pre[0]);
  t.input = ad::sigmoid(pre[1]);
  t.candidate = ad::tanh_op(pre[2]);
  t.output = ad::sigmoid(pre[3]);
  t.state.c = ad::add(ad::mul(t.forget, prev.c), ad::mul(t.input, t.candidate));
  t.state.h = ad::mul(t.output, ad::tanh_op(t.state.c));
  return t;
}

template <typename T>
void check_inputs(const LstmParams<T>& p, const LstmState<T>& prev, const Tensor<T>& r,
                  const Tensor<T>& e, std::size_t batch) {
  check_block(prev.h, batch, p.hidden_size, "hidden state");
  check_block(prev.c, batch, p.hidden_size, "cell state");
  check_block(r, batch, p.feature_size, "features");
  check_block(e, batch, p.embed_size, "embedding");
}

}  // namespace detail

// One step of either wiring; returns gate activations and the new state.
template <typename T>
StepTrace<T> step_traced(const LstmParams<T>& p, const LstmState<T>& prev, const Tensor<T>& r,
                         const Tensor<T>& e) {
  const std::size_t batch = prev.h.dim(0);
  detail::check_inputs(p, prev, r, e, batch);
  const auto gi = detail::gate_inputs(p, r, e, batch);
  return detail::step_with(p, prev, gi.feature, gi.embed);
}

template <typename T>
LstmState<T> step(const LstmParams<T>& p, const LstmState<T>& prev, const Tensor<T>& r,
                  const Tensor<T>& e) {
  return step_traced(p, prev, r, e).state;
}

template <typename T>
LstmState<T> step_standard(const LstmParams<T>& p, const LstmState<T>& prev, const Tensor<T>& r,
                           const Tensor<T>& e) {
  if (p.wiring != GateWiring::kStandard) throw ConfigError("step_standard: parameters use customized wiring");
  return step(p, prev, r, e);
}

template <typename T>
LstmState<T> step_customized(const LstmParams<T>& p, const LstmState<T>& prev,
                             const Tensor<T>& r, const Tensor<T>& e) {
  if (p.wiring != GateWiring::kCustomized) throw ConfigError("step_customized: parameters use standard wiring");
  return step(p, prev, r, e);
}

template <typename T>
struct SequenceOutput {
  Tensor<T> hidden;      // (T·N)×H, time-major: row t·N + n
  LstmState<T> final_state;
};

// Runs the cell over T = r.rows / batch time steps from a zero state.
// r is (T·N)×F in time-major row order; e (N×E) is held fixed across steps.
// The r-block products of all steps are formed in one product up front.
template <typename T>
SequenceOutput<T> run_sequence(const LstmParams<T>& p, const Tensor<T>& r, const Tensor<T>& e,
                               std::size_t batch) {
  if (batch == 0 || !r.defined() || r.rank() != 2 || r.dim(0) == 0 || r.dim(0) % batch != 0) {
    throw DimensionError("run_sequence: features must be a non-empty (T·N)×F matrix");
  }
  if (r.dim(1) != p.feature_size) {
    throw DimensionError("run_sequence: feature width " + std::to_string(r.dim(1)) +
                         " does not match cell feature size " + std::to_string(p.feature_size));
  }
  detail::check_block(e, batch, p.embed_size, "embedding");
  const std::size_t steps = r.dim(0) / batch;
  const auto gi = detail::gate_inputs(p, r, e, batch);
  LstmState<T> state = LstmState<T>::zeros(batch, p.hidden_size);
  std::vector<Tensor<T>> hidden;
  hidden.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    std::array<Tensor<T>, 4> feature_t;
    for (std::size_t g = 0; g < 4; ++g) {
      if (gi.feature[g].defined()) feature_t[g] = ad::slice_rows(gi.feature[g], t * batch, batch);
    }
    state = detail::step_with(p, state, feature_t, gi.embed).state;
    hidden.push_back(state.h);
  }
  return {ad::concat_rows(hidden), state};
}

}  // namespace tse::cells
