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

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "cell_oracle.hpp"
#include "test_util.hpp"
#include "tse/autodiff/grad_check.hpp"
#include "tse/cells/lstm.hpp"

namespace {

using namespace tse;
using cells::GateWiring;
using cells::LstmParams;
using cells::LstmState;
using ad::Tensor;
using tse::testing::random_tensor;
using P = LstmParams<double>;
using S = LstmState<double>;
using TensorD = Tensor<double>;

TensorD row(std::vector<double> v, bool grad = false) {
  const std::size_t n = v.size();
  return TensorD::from({1, n}, std::move(v), grad);
}

std::vector<double> vec(const TensorD& t) { return {t.data().begin(), t.data().end()}; }

void randomize(const P& p, Rng& rng, double scale = 1.0) {
  for (const auto& t : p.tensors())
    for (double& v : t.mutable_data()) v = scale * rng.uniform(-1.0, 1.0);
}

const GateWiring kBoth[] = {GateWiring::kStandard, GateWiring::kCustomized};

TEST(LstmParams, ShapesPerWiring) {
  const auto s = P::zeros(GateWiring::kStandard, 5, 7, 3);
  EXPECT_EQ(s.w_forget.shape(), (ad::Shape{5, 15}));
  EXPECT_EQ(s.w_input.shape(), (ad::Shape{5, 15}));
  EXPECT_EQ(s.b_forget.shape(), (ad::Shape{5}));
  const auto c = P::zeros(GateWiring::kCustomized, 5, 7, 3);
  EXPECT_EQ(c.w_forget.shape(), (ad::Shape{5, 8}));
  EXPECT_EQ(c.w_output.shape(), (ad::Shape{5, 15}));
  EXPECT_EQ(c.named()[0].first, "W_e");
  EXPECT_EQ(c.named()[4].first, "b_e");
  EXPECT_EQ(s.named()[0].first, "W_f");
  EXPECT_THROW(P::zeros(GateWiring::kCustomized, 5, 7, 0), ConfigError);
}

TEST(LstmParams, InitBoundsAndForgetBias) {
  Rng rng(1);
  const auto p = P::init(GateWiring::kCustomized, 16, 10, 6, rng);
  for (const auto* w : {&p.w_forget, &p.w_input, &p.w_cell, &p.w_output}) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(w->dim(1)));
    for (double v : w->data()) EXPECT_LE(std::abs(v), bound);
  }
  for (double v : p.b_forget.data()) EXPECT_EQ(v, 1.0);
  for (double v : p.b_input.data()) EXPECT_EQ(v, 0.0);
}

TEST(Wiring, ParseAndPrint) {
  EXPECT_EQ(cells::parse_wiring("standard"), GateWiring::kStandard);
  EXPECT_EQ(cells::parse_wiring("customized"), GateWiring::kCustomized);
  EXPECT_EQ(cells::to_string(GateWiring::kCustomized), "customized");
  EXPECT_THROW(cells::parse_wiring("peephole"), ConfigError);
}

TEST(Step, AllZeroParamsHandValues) {
  for (GateWiring w : kBoth) {
    const auto p = P::zeros(w, 2, 3, 2);
    const S prev{row({0, 0}), row({1, 1})};
    const auto t = cells::step_traced(p, prev, row({0.3, -1, 2}), row({0.5, 0.5}));
    for (std::size_t j = 0; j < 2; ++j) {
      EXPECT_EQ(t.forget[j], 0.5);
      EXPECT_EQ(t.input[j], 0.5);
      EXPECT_EQ(t.candidate[j], 0.0);
      EXPECT_EQ(t.state.c[j], 0.5);
      EXPECT_NEAR(t.state.h[j], 0.2311, 5e-5);
      EXPECT_DOUBLE_EQ(t.state.h[j], 0.5 * std::tanh(0.5));
    }
  }
}

TEST(Step, MemoryRetentionLimit) {
  for (GateWiring w : kBoth) {
    auto p = P::zeros(w, 3, 2, 2);
    for (double& v : p.b_forget.mutable_data()) v = 50.0;
    for (double& v : p.b_input.mutable_data()) v = -50.0;
    Rng rng(4);
    const S prev{random_tensor({1, 3}, rng, -1, 1, false), random_tensor({1, 3}, rng, -2, 2, false)};
    const auto s = cells::step(p, prev, random_tensor({1, 2}, rng, -1, 1, false),
                               random_tensor({1, 2}, rng, -1, 1, false));
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(s.c[j], prev.c[j], 1e-12);
  }
}

TEST(Step, ExactRetentionWhenGatesSaturate) {
  // In floating point sigmoid(800) == 1 and sigmoid(-800) == 0 exactly.
  for (GateWiring w : kBoth) {
    auto p = P::zeros(w, 3, 2, 2);
    for (double& v : p.b_forget.mutable_data()) v = 800.0;
    for (double& v : p.b_input.mutable_data()) v = -800.0;
    Rng rng(5);
    for (double& v : p.w_cell.mutable_data()) v = rng.uniform(-1.0, 1.0);
    const S prev{random_tensor({1, 3}, rng, -1, 1, false), random_tensor({1, 3}, rng, -2, 2, false)};
    const auto s = cells::step(p, prev, random_tensor({1, 2}, rng, -1, 1, false),
                               random_tensor({1, 2}, rng, -1, 1, false));
    EXPECT_EQ(vec(s.c), vec(prev.c));
  }
}

TEST(Step, CustomizedForgetGateIgnoresFeatures) {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = P::init(GateWiring::kCustomized, 4, 5, 3, rng);
    randomize(p, rng);
    const S prev{random_tensor({2, 4}, rng, -1, 1, false), random_tensor({2, 4}, rng, -1, 1, false)};
    const auto e = random_tensor({2, 3}, rng, -1, 1, false);
    const auto a = cells::step_traced(p, prev, random_tensor({2, 5}, rng, -5, 5, false), e);
    const auto b = cells::step_traced(p, prev, random_tensor({2, 5}, rng, -5, 5, false), e);
    EXPECT_EQ(vec(a.forget), vec(b.forget));
    EXPECT_NE(vec(a.input), vec(b.input));
  }
}

TEST(Step, StandardForgetGateDependsOnFeatures) {
  Rng rng(7);
  const auto p = P::init(GateWiring::kStandard, 4, 5, 3, rng);
  const S prev = S::zeros(1, 4);
  const auto e = random_tensor({1, 3}, rng, -1, 1, false);
  const auto a = cells::step_traced(p, prev, random_tensor({1, 5}, rng, -1, 1, false), e);
  const auto b = cells::step_traced(p, prev, random_tensor({1, 5}, rng, -1, 1, false), e);
  EXPECT_NE(vec(a.forget), vec(b.forget));
}

TEST(Step, CustomizedIsConstrainedStandard) {
  // Standard cell with zero feature columns in W_f and the customized
  // forget weights elsewhere reproduces the customized cell bit for bit.
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t H = 4, F = 6, E = 3;
    const auto c = P::init(GateWiring::kCustomized, H, F, E, rng);
    randomize(c, rng);
    auto s = P::zeros(GateWiring::kStandard, H, F, E);
    for (std::size_t j = 0; j < H; ++j) {
      for (std::size_t k = 0; k < H; ++k) s.w_forget.mutable_data()[j * (H + F + E) + k] = c.w_forget[j * (H + E) + k];
      for (std::size_t k = 0; k < E; ++k)
        s.w_forget.mutable_data()[j * (H + F + E) + H + F + k] = c.w_forget[j * (H + E) + H + k];
    }
    for (auto [dst, src] : {std::pair{&s.w_input, &c.w_input}, {&s.w_cell, &c.w_cell}, {&s.w_output, &c.w_output},
                            {&s.b_forget, &c.b_forget}, {&s.b_input, &c.b_input}, {&s.b_cell, &c.b_cell},
                            {&s.b_output, &c.b_output}}) {
      std::copy(src->data().begin(), src->data().end(), dst->mutable_data().begin());
    }
    const auto r = random_tensor({12, F}, rng, -1, 1, false);
    const auto e = random_tensor({2, E}, rng, -1, 1, false);
    const auto a = cells::run_sequence(c, r, e, 2);
    const auto b = cells::run_sequence(s, r, e, 2);
    EXPECT_EQ(vec(a.hidden), vec(b.hidden));
    EXPECT_EQ(vec(a.final_state.c), vec(b.final_state.c));
  }
}

TEST(Step, GateRanges) {
  Rng rng(9);
  for (GateWiring w : kBoth) {
    const auto p = P::init(w, 6, 4, 3, rng);
    randomize(p, rng, 3.0);
    for (int trial = 0; trial < 20; ++trial) {
      const S prev{random_tensor({3, 6}, rng, -1, 1, false), random_tensor({3, 6}, rng, -3, 3, false)};
      const auto t = cells::step_traced(p, prev, random_tensor({3, 4}, rng, -3, 3, false),
                                        random_tensor({3, 3}, rng, -1, 1, false));
      for (const auto* g : {&t.forget, &t.input, &t.output})
        for (double v : g->data()) {
          EXPECT_GT(v, 0.0);
          EXPECT_LT(v, 1.0);
        }
      // tanh of a large pre-activation rounds to exactly 1 in double.
      for (double v : t.candidate.data()) EXPECT_LE(std::abs(v), 1.0);
      for (double v : t.state.h.data()) EXPECT_LE(std::abs(v), 1.0);
    }
  }
}

TEST(Step, MatchesScalarOracle) {
  Rng rng(10);
  for (GateWiring w : kBoth) {
    for (int trial = 0; trial < 20; ++trial) {
      const auto p = P::init(w, 5, 4, 3, rng);
      randomize(p, rng);
      std::vector<double> h(5), c(5), r(4), e(3);
      for (auto* v : {&h, &c, &r, &e})
        for (double& x : *v) x = rng.uniform(-1, 1);
      const auto ref = tse::testing::oracle_step(p, {h, c}, r, e);
      const auto got = cells::step_traced(p, S{row(h), row(c)}, row(r), row(e));
      EXPECT_LT(tse::testing::max_abs_diff(vec(got.state.h), ref.state.h), 1e-12);
      EXPECT_LT(tse::testing::max_abs_diff(vec(got.state.c), ref.state.c), 1e-12);
      EXPECT_LT(tse::testing::max_abs_diff(vec(got.forget), ref.f), 1e-12);
    }
  }
}

TEST(Step, DimensionMismatchAndWrongWiring) {
  const auto p = P::zeros(GateWiring::kStandard, 3, 2, 2);
  const S prev = S::zeros(1, 3);
  EXPECT_THROW(cells::step(p, prev, row({1, 2, 3}), row({1, 2})), DimensionError);
  EXPECT_THROW(cells::step(p, prev, row({1, 2}), row({1})), DimensionError);
  EXPECT_THROW(cells::step(p, S::zeros(1, 4), row({1, 2}), row({1, 2})), DimensionError);
  EXPECT_THROW(cells::step_customized(p, prev, row({1, 2}), row({1, 2})), ConfigError);
  const auto c = P::zeros(GateWiring::kCustomized, 3, 2, 2);
  EXPECT_THROW(cells::step_standard(c, prev, row({1, 2}), row({1, 2})), ConfigError);
  EXPECT_NO_THROW(cells::step_customized(c, prev, row({1, 2}), row({1, 2})));
}

TEST(Step, GradientsMatchFiniteDifferences) {
  for (GateWiring w : kBoth) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      Rng rng(100 + seed);
      const auto p = P::init(w, 3, 4, 2, rng);
      randomize(p, rng, 0.8);
      const S prev{random_tensor({1, 3}, rng, -1, 1, false), random_tensor({1, 3}, rng, -1, 1, false)};
      const auto r = random_tensor({1, 4}, rng, -1, 1, false);
      const auto e = random_tensor({1, 2}, rng, -1, 1, false);
      const double err = ad::grad_check([&] { return ad::sum(cells::step(p, prev, r, e).h); }, p.tensors());
      EXPECT_LT(err, 1e-5) << cells::to_string(w) << " seed " << seed;
    }
  }
}

TEST(Sequence, SingleStepEqualsStep) {
  Rng rng(11);
  for (GateWiring w : kBoth) {
    const auto p = P::init(w, 4, 3, 2, rng);
    const auto r = random_tensor({2, 3}, rng, -1, 1, false);
    const auto e = random_tensor({2, 2}, rng, -1, 1, false);
    const auto seq = cells::run_sequence(p, r, e, 2);
    const auto one = cells::step(p, S::zeros(2, 4), r, e);
    EXPECT_EQ(vec(seq.hidden), vec(one.h));
  }
}

TEST(Sequence, MatchesRepeatedSteps) {
  Rng rng(12);
  for (GateWiring w : kBoth) {
    const std::size_t T = 6, N = 3;
    const auto p = P::init(w, 4, 3, 2, rng);
    const auto r = random_tensor({T * N, 3}, rng, -1, 1, false);
    const auto e = random_tensor({N, 2}, rng, -1, 1, false);
    const auto seq = cells::run_sequence(p, r, e, N);
    S s = S::zeros(N, 4);
    for (std::size_t t = 0; t < T; ++t) {
      s = cells::step(p, s, ad::slice_rows(r, t * N, N), e);
      EXPECT_LT(tse::testing::max_abs_diff(vec(ad::slice_rows(seq.hidden, t * N, N)), vec(s.h)), 1e-14);
    }
  }
}

TEST(Sequence, CellApproachesFixedPointMonotonically) {
  // Constant input: with f and i constant the recursion c <- f c + i g is
  // an affine contraction, so c moves monotonically toward i g / (1 - f).
  for (GateWiring w : kBoth) {
    auto p = P::zeros(w, 2, 2, 1);
    for (double& v : p.b_forget.mutable_data()) v = 2.0;
    for (double& v : p.b_input.mutable_data()) v = 0.5;
    p.b_cell.mutable_data()[0] = 0.8;
    p.b_cell.mutable_data()[1] = -0.6;
    for (double& v : p.b_output.mutable_data()) v = 1.0;
    const std::size_t T = 40;
    const auto seq = cells::run_sequence(p, TensorD::full({T, 2}, 0.3), TensorD::full({1, 1}, 0.2), 1);
    S s = S::zeros(1, 2);
    std::vector<std::vector<double>> cs;
    for (std::size_t t = 0; t < T; ++t) {
      s = cells::step(p, s, TensorD::full({1, 2}, 0.3), TensorD::full({1, 1}, 0.2));
      cs.push_back(vec(s.c));
    }
    const double f = 1.0 / (1.0 + std::exp(-2.0)), i = 1.0 / (1.0 + std::exp(-0.5));
    for (std::size_t j = 0; j < 2; ++j) {
      const double fixed = i * std::tanh(p.b_cell[j]) / (1.0 - f);
      for (std::size_t t = 1; t < T; ++t) {
        EXPECT_LT(std::abs(cs[t][j] - fixed), std::abs(cs[t - 1][j] - fixed));
      }
    }
    EXPECT_EQ(vec(seq.final_state.c), cs.back());
  }
}

TEST(Sequence, EmptyOrRaggedRejected) {
  const auto p = P::zeros(GateWiring::kStandard, 2, 3, 1);
  EXPECT_THROW(cells::run_sequence(p, TensorD::zeros({0, 3}), TensorD::zeros({1, 1}), 1), DimensionError);
  EXPECT_THROW(cells::run_sequence(p, TensorD::zeros({5, 3}), TensorD::zeros({2, 1}), 2), DimensionError);
  EXPECT_THROW(cells::run_sequence(p, TensorD::zeros({4, 2}), TensorD::zeros({1, 1}), 1), DimensionError);
}

TEST(Sequence, UnrolledGradientsMatchFiniteDifferences) {
  for (GateWiring w : kBoth) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      Rng rng(200 + seed);
      const auto p = P::init(w, 3, 4, 2, rng);
      randomize(p, rng, 0.8);
      const auto r = random_tensor({8, 4}, rng, -1, 1, false);
      const auto e = random_tensor({1, 2}, rng, -1, 1, false);
      const auto weights = random_tensor({8, 3}, rng, -1, 1, false);
      const double err = ad::grad_check(
          [&] { return ad::sum(ad::mul(cells::run_sequence(p, r, e, 1).hidden, weights)); }, p.tensors());
      EXPECT_LT(err, 1e-4) << cells::to_string(w) << " seed " << seed;
    }
  }
}

}  // namespace
