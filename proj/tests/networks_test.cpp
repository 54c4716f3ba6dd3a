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
#include <filesystem>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "tse/autodiff/grad_check.hpp"
#include "tse/data/dataset.hpp"
#include "tse/data/synth.hpp"
#include "tse/losses/losses.hpp"
#include "tse/networks/checkpoint.hpp"
#include "tse/networks/extractor.hpp"
#include "tse/networks/masking.hpp"

namespace {

using namespace tse;
using namespace tse::networks;
using cells::GateWiring;
using tse::testing::random_tensor;
using tse::testing::random_signal;
using TensorD = ad::Tensor<double>;

SeparatorConfig small_separator(std::size_t bins, GateWiring w, double width = 1.0 / 16.0) {
  SeparatorConfig c;
  c.bins = bins;
  c = c.scaled(width);
  c.wiring = w;
  return c;
}

std::vector<double> vec(const TensorD& t) { return {t.data().begin(), t.data().end()}; }

std::size_t count_params(const NamedTensors<double>& named) {
  std::size_t total = 0;
  for (const auto& [n, t] : named) total += t.numel();
  return total;
}

TEST(SeparatorConfig, FullSizeLayout) {
  const SeparatorConfig c;
  EXPECT_EQ(c.bins, 257u);
  EXPECT_EQ(c.lstm_hidden, 600u);
  EXPECT_EQ(c.fc1, 514u);
  EXPECT_EQ(c.convs.back().filters, 8u);
  EXPECT_EQ(c.feature_size(), 2056u);
  // Conv5: 5×5 kernel dilated by 4 along frequency spans 17 bins.
  EXPECT_EQ(c.convs[4].kernel_rows, 5u);
  EXPECT_EQ(c.convs[4].dilation_rows, 4u);
  EXPECT_EQ(ad::dilated_extent(c.convs[4].kernel_rows, c.convs[4].dilation_rows), 17u);
}

TEST(SeparatorConfig, ScalingKeepsStructuralWidths) {
  const auto c = SeparatorConfig{}.scaled(1.0 / 8.0);
  EXPECT_EQ(c.convs[0].filters, 8u);
  EXPECT_EQ(c.convs.back().filters, 8u);
  EXPECT_EQ(c.lstm_hidden, 75u);
  EXPECT_EQ(c.embed_dim, 32u);
  EXPECT_EQ(c.bins, 257u);
  EXPECT_THROW(SeparatorConfig{}.scaled(0.0), ConfigError);
  auto bad = SeparatorConfig{};
  bad.convs[2].kernel_rows = 4;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Separator, ParameterCensusDiffersOnlyInForgetGate) {
  const SeparatorConfig base;
  Rng r1(1), r2(1);
  auto s_cfg = base, c_cfg = base;
  s_cfg.wiring = GateWiring::kStandard;
  c_cfg.wiring = GateWiring::kCustomized;
  const Separator<double> s(s_cfg, r1), c(c_cfg, r2);
  const auto ps = s.parameters(), pc = c.parameters();
  ASSERT_EQ(ps.size(), pc.size());
  std::size_t differing = 0;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (ps[i].second.shape() != pc[i].second.shape()) {
      ++differing;
      EXPECT_EQ(ps[i].first, "lstm.W_f");
      EXPECT_EQ(pc[i].first, "lstm.W_e");
      EXPECT_EQ(ps[i].second.shape(), (ad::Shape{600, 600 + 2056 + 256}));
      EXPECT_EQ(pc[i].second.shape(), (ad::Shape{600, 600 + 256}));
    } else if (ps[i].first != pc[i].first) {
      EXPECT_EQ(ps[i].first, "lstm.b_f");
      EXPECT_EQ(pc[i].first, "lstm.b_e");
    }
  }
  EXPECT_EQ(differing, 1u);
  EXPECT_EQ(count_params(ps) - count_params(pc), 600u * 2056u);
}

TEST(Separator, ShapeChainFourSecondsAt16k) {
  Rng rng(2);
  const auto stft = dsp::separator_stft(16000.0);
  auto cfg = small_separator(stft.bins(), GateWiring::kCustomized);
  Separator<double> sep(cfg, rng);
  const auto x = random_signal(64000, rng);
  const auto spec = dsp::stft(x, stft);
  ASSERT_EQ(spec.num_bins, 257u);
  ASSERT_EQ(spec.num_frames, 249u);
  ad::NoGradGuard ng;
  const auto mags = TensorD::from({1, 257, 249}, spec.magnitude());
  const auto feats = sep.extract_features(mags, false);
  EXPECT_EQ(feats.shape(), (ad::Shape{249, 2056}));
  const auto mask = sep.estimate_mask(feats, random_tensor({1, cfg.embed_dim}, rng, -1, 1, false), 1);
  EXPECT_EQ(mask.shape(), (ad::Shape{1, 257, 249}));
  const Mask m{257, 249, vec(mask)};
  const auto y = apply_mask(spec, m);
  EXPECT_EQ(y.size(), spec.signal_length());
}

TEST(Separator, MaskInUnitIntervalAndFiniteForZeroInput) {
  Rng rng(3);
  for (GateWiring w : {GateWiring::kStandard, GateWiring::kCustomized}) {
    Separator<double> sep(small_separator(33, w, 1.0 / 8.0), rng);
    for (bool zero : {true, false}) {
      const auto mags = zero ? TensorD::zeros({2, 33, 12}) : random_tensor({2, 33, 12}, rng, 0, 3, false);
      for (bool training : {true, false}) {
        const auto feats = sep.extract_features(mags, training);
        for (double v : feats.data()) EXPECT_TRUE(std::isfinite(v));
        const auto m = sep.estimate_mask(feats, random_tensor({2, sep.config().embed_dim}, rng, -1, 1, false), 2);
        for (double v : m.data()) {
          EXPECT_GT(v, 0.0);
          EXPECT_LT(v, 1.0);
        }
      }
    }
  }
}

TEST(Separator, ConditioningIsLive) {
  Rng rng(4);
  for (GateWiring w : {GateWiring::kStandard, GateWiring::kCustomized}) {
    Separator<double> sep(small_separator(33, w, 1.0 / 8.0), rng);
    const auto mags = random_tensor({1, 33, 10}, rng, 0, 2, false);
    const auto a = sep.forward(mags, random_tensor({1, sep.config().embed_dim}, rng, -1, 1, false), false);
    const auto b = sep.forward(mags, random_tensor({1, sep.config().embed_dim}, rng, -1, 1, false), false);
    EXPECT_GT(tse::testing::max_abs_diff(vec(a), vec(b)), 1e-6);
  }
}

TEST(Separator, BatchItemsAreIndependentInEvalMode) {
  Rng rng(5);
  Separator<double> sep(small_separator(17, GateWiring::kCustomized, 1.0 / 8.0), rng);
  const std::size_t E = sep.config().embed_dim;
  const auto m1 = random_tensor({1, 17, 6}, rng, 0, 2, false), m2 = random_tensor({1, 17, 6}, rng, 0, 2, false);
  const auto e1 = random_tensor({1, E}, rng, -1, 1, false), e2 = random_tensor({1, E}, rng, -1, 1, false);
  std::vector<double> mv = vec(m1), ev = vec(e1);
  mv.insert(mv.end(), m2.data().begin(), m2.data().end());
  ev.insert(ev.end(), e2.data().begin(), e2.data().end());
  const auto both = sep.forward(TensorD::from({2, 17, 6}, mv), TensorD::from({2, E}, ev), false);
  const auto one = sep.forward(m2, e2, false);
  EXPECT_LT(tse::testing::max_abs_diff(std::vector<double>(both.data().begin() + 17 * 6, both.data().end()), vec(one)), 1e-12);
}

TEST(Separator, WrongShapesRejected) {
  Rng rng(6);
  Separator<double> sep(small_separator(17, GateWiring::kStandard, 1.0 / 8.0), rng);
  EXPECT_THROW(sep.extract_features(TensorD::zeros({1, 16, 5}), false), DimensionError);
  const auto f = sep.extract_features(TensorD::zeros({1, 17, 5}), false);
  EXPECT_THROW(sep.estimate_mask(f, TensorD::zeros({1, sep.config().embed_dim + 1}), 1), DimensionError);
}

TEST(Separator, DeterministicUnderSeed) {
  auto run = [] {
    Rng rng(77);
    Separator<double> sep(small_separator(33, GateWiring::kCustomized, 1.0 / 8.0), rng);
    const auto mags = random_tensor({2, 33, 9}, rng, 0, 2, false);
    const auto e = random_tensor({2, sep.config().embed_dim}, rng, -1, 1, false);
    sep.forward(mags, e, true);  // moves the running statistics
    return vec(sep.forward(mags, e, false));
  };
  EXPECT_EQ(run(), run());
}

TEST(Separator, MaskGradientsMatchFiniteDifferences) {
  for (GateWiring w : {GateWiring::kStandard, GateWiring::kCustomized}) {
    Rng rng(8);
    auto sep = std::make_shared<Separator<double>>(small_separator(9, w, 1.0 / 64.0), rng);
    const auto feats = random_tensor({2 * 5, sep->config().feature_size()}, rng, 0, 1, false);
    const auto emb = random_tensor({2, sep->config().embed_dim}, rng, -1, 1, false);
    const auto weights = random_tensor({2, 9, 5}, rng, -1, 1, false);
    std::vector<TensorD> params;
    for (const auto& [name, t] : sep->parameters())
      if (name.rfind("conv", 0) != 0) params.push_back(t);
    const auto r = ad::grad_check_detailed(
        [&] { return ad::sum(ad::mul(sep->estimate_mask(feats, emb, 2), weights)); }, params);
    EXPECT_LT(r.max_tensor_rel_error, 1e-4) << cells::to_string(w);
  }
}

TEST(MaskedIstft, AdjointMatchesFiniteDifferences) {
  Rng rng(9);
  const dsp::StftConfig cfg{16, 16, 8, dsp::Window::kSqrtHann, 8000.0};
  auto specs = std::make_shared<std::vector<dsp::Spectrogram>>();
  for (int b = 0; b < 2; ++b) specs->push_back(dsp::stft(random_signal(72, rng), cfg));
  const auto mask = random_tensor({2, 9, specs->front().num_frames}, rng, 0.1, 0.9);
  const std::size_t len = specs->front().signal_length();
  const auto w = random_tensor({2, len}, rng, -1, 1, false);
  std::shared_ptr<const std::vector<dsp::Spectrogram>> cs = specs;
  const double err = ad::grad_check([&] { return ad::sum(ad::mul(masked_istft(mask, cs), w)); }, {mask});
  EXPECT_LT(err, 1e-6);
}

TEST(Masking, ZeroMaskGivesSilenceAndShapeMismatchRejected) {
  Rng rng(10);
  const auto spec = dsp::stft(random_signal(2000, rng), dsp::separator_stft(8000.0));
  Mask zero = unit_mask(spec);
  std::fill(zero.values.begin(), zero.values.end(), 0.0);
  for (double v : apply_mask(spec, zero)) EXPECT_EQ(v, 0.0);
  Mask bad{spec.num_bins, spec.num_frames + 1, std::vector<double>(spec.num_bins * (spec.num_frames + 1), 1.0)};
  EXPECT_THROW(apply_mask(spec, bad), DimensionError);
}

TEST(Masking, OracleMaskImprovesSyntheticMixture) {
  const auto spk = data::make_speakers(2, 3);
  const double rate = 8000.0;
  auto target = data::synth_utterance(spk[0], 2.0, rate, 11);
  auto interferer = data::synth_utterance(spk[1], 2.0, rate, 12);
  const auto mixture = data::mix(target, interferer);
  const auto cfg = dsp::separator_stft(rate);
  const auto m = oracle_mask(dsp::stft(target, cfg), dsp::stft(interferer, cfg));
  for (double v : m.values) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  auto out = apply_mask(dsp::stft(mixture, cfg), m);
  out.resize(mixture.size(), 0.0);
  EXPECT_GT(losses::si_sdr_improvement(out, mixture, target), 5.0);
}

// ---- embedder -----------------------------------------------------------

TEST(Embedder, UnitNormAndDeterministic) {
  Rng rng(12);
  const Embedder<double> emb({40, 3, 16, 8}, rng);
  const auto spk = data::make_speakers(1, 1);
  const auto ref = data::synth_utterance(spk[0], 1.0, 8000.0, 5);
  const auto a = emb.embed(ref, 8000.0);
  const auto b = emb.embed(ref, 8000.0);
  ASSERT_EQ(a.size(), 8u);
  double n = 0.0;
  for (double v : a) n += v * v;
  EXPECT_NEAR(std::sqrt(n), 1.0, 1e-6);
  EXPECT_EQ(a, b);
}

TEST(Embedder, UnitNormForRandomFeatureBatches) {
  Rng rng(13);
  const Embedder<double> emb({6, 2, 5, 4}, rng);
  const auto out = emb.forward(random_tensor({7 * 3, 6}, rng, -2, 2, false), 3);
  ASSERT_EQ(out.shape(), (ad::Shape{3, 4}));
  for (std::size_t r = 0; r < 3; ++r) {
    double n = 0.0;
    for (std::size_t k = 0; k < 4; ++k) n += out[r * 4 + k] * out[r * 4 + k];
    // Normalization divides by norm + 1e-12, so the result falls short of 1 by ~1e-12 / norm.
    EXPECT_NEAR(std::sqrt(n), 1.0, 1e-9);
  }
}

TEST(Embedder, ShortReferenceRejected) {
  Rng rng(14);
  const Embedder<double> emb({40, 1, 4, 4}, rng);
  EXPECT_THROW(emb.embed(std::vector<double>(100, 0.1), 8000.0), DataError);
  EXPECT_NO_THROW(emb.embed(std::vector<double>(200, 0.1), 8000.0));
}

TEST(Embedder, FeaturesStandardizedPerUtterance) {
  Rng rng(15);
  const auto f = embedder_features(random_signal(4000, rng), 8000.0, 40);
  double mu = 0.0;
  for (double v : f.values) mu += v;
  mu /= static_cast<double>(f.values.size());
  EXPECT_NEAR(mu, 0.0, 1e-9);
  EXPECT_EQ(f.values.size(), f.frames * 40);
}

TEST(Embedder, HeadOnlyWhenRequested) {
  Rng rng(16);
  const Embedder<double> plain({4, 1, 3, 2}, rng);
  EXPECT_THROW(plain.logits(TensorD::zeros({1, 2})), ConfigError);
  const Embedder<double> with_head({4, 1, 3, 2}, rng, 5);
  EXPECT_EQ(with_head.num_speakers(), 5u);
  EXPECT_EQ(with_head.parameters(true).size(), plain.parameters().size() + 2);
}

// ---- extractor and checkpoints ------------------------------------------

Extractor<double> small_model(GateWiring w, std::uint64_t seed) {
  Rng rng(seed);
  const auto stft = dsp::separator_stft(8000.0);
  const auto sep = small_separator(stft.bins(), w);
  return Extractor<double>(sep, {40, 2, 8, sep.embed_dim}, stft, rng);
}

TEST(Extractor, ConfigsMustAgree) {
  Rng rng(17);
  const auto stft = dsp::separator_stft(8000.0);
  EXPECT_THROW(Extractor<double>(small_separator(257, GateWiring::kStandard), {40, 1, 4, 4}, stft, rng), ConfigError);
  const auto sep = small_separator(129, GateWiring::kStandard);
  EXPECT_THROW(Extractor<double>(sep, {40, 1, 4, sep.embed_dim + 1}, stft, rng), ConfigError);
}

TEST(Extractor, OutputMatchesMixtureLengthAndIsDeterministic) {
  auto model = small_model(GateWiring::kCustomized, 18);
  Rng rng(19);
  const auto mixture = random_signal(8000 + 77, rng);
  const auto reference = random_signal(6000, rng);
  const auto a = model.extract(mixture, reference);
  const auto b = model.extract(mixture, reference);
  EXPECT_EQ(a.size(), mixture.size());
  EXPECT_EQ(a, b);
}

TEST(Checkpoint, RoundTripRestoresEverything) {
  auto model = small_model(GateWiring::kCustomized, 20);
  Rng rng(21);
  // Move the running statistics away from their initial values.
  const auto mags = random_tensor({2, 129, 7}, rng, 0, 1, false);
  model.separator().forward(mags, random_tensor({2, model.separator().config().embed_dim}, rng, -1, 1, false), true);
  const auto ck = make_checkpoint(model, {{"note", "test"}});
  const auto path = (std::filesystem::temp_directory_path() / "tse_ckpt_test.ckpt").string();
  save_checkpoint(path, ck);
  const auto back = read_checkpoint(path);
  std::filesystem::remove(path);
  EXPECT_EQ(back.extra.at("note"), "test");
  auto loaded = load_model<double>(back, GateWiring::kCustomized);
  const auto mixture = random_signal(4000, rng), reference = random_signal(4000, rng);
  EXPECT_EQ(model.extract(mixture, reference), loaded.extract(mixture, reference));
  const auto pa = model.separator().parameters(), pb = loaded.separator().parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(vec(pa[i].second), vec(pb[i].second)) << pa[i].first;
  const auto sa = model.separator().batch_norm_stats();
  const auto sb = loaded.separator().batch_norm_stats();
  for (std::size_t i = 0; i < sa.size(); ++i) {
    EXPECT_EQ(sa[i]->mean, sb[i]->mean);
    EXPECT_EQ(sa[i]->var, sb[i]->var);
  }
}

TEST(Checkpoint, WiringMismatchIsExplicitError) {
  auto model = small_model(GateWiring::kStandard, 22);
  const auto ck = make_checkpoint(model);
  EXPECT_THROW(load_model<double>(ck, GateWiring::kCustomized), ConfigError);
  auto other = small_model(GateWiring::kCustomized, 22);
  EXPECT_THROW(restore(ck, other), ConfigError);
  EXPECT_NO_THROW(load_model<double>(ck, GateWiring::kStandard));
}

TEST(Checkpoint, CorruptBytesRejected) {
  auto model = small_model(GateWiring::kStandard, 23);
  const std::string bytes = encode_checkpoint(make_checkpoint(model));
  EXPECT_NO_THROW(decode_checkpoint(bytes));
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, 6)), DataError);
  EXPECT_THROW(decode_checkpoint("NOTACKPT" + bytes.substr(8)), DataError);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 16)), DataError);
  std::string version = bytes;
  version[8] = 9;
  EXPECT_THROW(decode_checkpoint(version), DataError);
  EXPECT_THROW(read_checkpoint("/nonexistent/model.ckpt"), DataError);
}

TEST(Checkpoint, EmbedderOnlyRoundTrip) {
  Rng rng(24);
  const Embedder<double> emb({40, 2, 6, 4}, rng, 3);
  const auto ck = make_embedder_checkpoint(emb, dsp::separator_stft(8000.0));
  EXPECT_EQ(ck.extra.at("kind"), "embedder");
  Rng other(25);
  Embedder<double> copy({40, 2, 6, 4}, other);
  restore_embedder(decode_checkpoint(encode_checkpoint(ck)), copy);
  const auto ref = random_signal(3000, rng);
  EXPECT_EQ(emb.embed(ref, 8000.0), copy.embed(ref, 8000.0));
  Embedder<double> wrong({40, 2, 7, 4}, other);
  EXPECT_THROW(restore_embedder(ck, wrong), ConfigError);
}

TEST(Checkpoint, FloatModelLoadsFromSameFile) {
  auto model = small_model(GateWiring::kCustomized, 26);
  const auto ck = make_checkpoint(model);
  auto f = load_model<float>(ck);
  Rng rng(27);
  const auto mixture = random_signal(4000, rng), reference = random_signal(4000, rng);
  const auto a = model.extract(mixture, reference);
  const auto b = f.extract(mixture, reference);
  EXPECT_LT(tse::testing::max_abs_diff(a, b), 1e-4);
}

}  // namespace
