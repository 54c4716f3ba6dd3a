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

// Acceptance run: prints one PASS/FAIL line per criterion and exits nonzero
// if any fails. Detail lines are indented.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cell_oracle.hpp"
#include "test_util.hpp"
#include "tse/cells/lstm.hpp"
#include "tse/data/dataset.hpp"
#include "tse/data/manifest.hpp"
#include "tse/dsp/stft.hpp"
#include "tse/losses/losses.hpp"
#include "tse/losses/report.hpp"
#include "tse/networks/masking.hpp"
#include "tse/networks/separator.hpp"
#include "tse/train/trainer.hpp"

namespace {

using namespace tse;
namespace fs = std::filesystem;
using cells::GateWiring;
using Clock = std::chrono::steady_clock;
using tse::testing::max_abs_diff;
using tse::testing::random_signal;
using tse::testing::random_tensor;

int failures = 0;

void verdict(bool pass, const char* fmt, ...) {
  std::printf("%s  ", pass ? "PASS" : "FAIL");
  va_list args;
  va_start(args, fmt);
  std::vfprintf(stdout, fmt, args);
  va_end(args);
  std::printf("\n");
  std::fflush(stdout);
  if (!pass) ++failures;
}

void detail(const char* fmt, ...) {
  std::printf("      ");
  va_list args;
  va_start(args, fmt);
  std::vfprintf(stdout, fmt, args);
  va_end(args);
  std::printf("\n");
  std::fflush(stdout);
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Run {
  int code = -1;
  std::string output;
};

Run run_cli(const std::string& args) {
  const std::string cmd = std::string(TSE_CLI_PATH) + " " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  while (std::fgets(buf, sizeof(buf), pipe)) r.output += buf;
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// ---- gradients ------------------------------------------------------------

void gradient_integrity() {
  const auto t0 = Clock::now();
  const Run r = run_cli("gradcheck");
  const double secs = seconds_since(t0);
  std::istringstream lines(r.output);
  std::string line, worst = "?";
  const std::vector<std::string> families = {"cell.standard.", "cell.customized.", "separator.standard.",
                                             "separator.customized.", "embedder.", "loss.sisnr", "loss.plc"};
  std::vector<bool> seen(families.size(), false);
  bool all_ok = true;
  while (std::getline(lines, line)) {
    for (std::size_t f = 0; f < families.size(); ++f) {
      if (line.rfind(families[f], 0) == 0) {
        seen[f] = true;
        all_ok = all_ok && line.size() >= 2 && line.substr(line.size() - 2) == "ok";
        detail("%s", line.c_str());
      }
    }
    if (line.rfind("worst relative error", 0) == 0) worst = line.substr(21, 9);
  }
  bool covered = true;
  for (bool s : seen) covered = covered && s;
  verdict(r.code == 0 && all_ok && covered && secs < 120.0,
          "gradient integrity: gradcheck worst relative error %s at float64 over cells, separator, embedder and "
          "both losses in %.1f s (need < 1e-4, < 120 s)",
          worst.c_str(), secs);
}

// ---- cell equations --------------------------------------------------------

using TensorD = ad::Tensor<double>;

TensorD row(const std::vector<double>& v) { return TensorD::from({1, v.size()}, v); }

std::vector<double> values(const TensorD& t) { return {t.data().begin(), t.data().end()}; }

double max_err(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return a.size() == b.size() ? m : INFINITY;
}

cells::LstmState<double> step_named(const cells::LstmParams<double>& p, const cells::LstmState<double>& prev,
                                    const TensorD& r, const TensorD& e) {
  return p.wiring == GateWiring::kStandard ? cells::step_standard(p, prev, r, e)
                                           : cells::step_customized(p, prev, r, e);
}

void cell_oracle() {
  double worst = 0.0;
  // All-zero parameters: every sigmoid gate is 1/2 and the candidate is 0.
  for (GateWiring w : {GateWiring::kStandard, GateWiring::kCustomized}) {
    const auto p = cells::LstmParams<double>::zeros(w, 3, 4, 2);
    const std::vector<double> c_prev = {1.0, -0.6, 0.25};
    const auto s = step_named(p, {row({0.2, -0.1, 0.4}), row(c_prev)}, row({0.3, -1, 2, 0.5}), row({0.5, -0.5}));
    std::vector<double> c_hand, h_hand;
    for (double c : c_prev) {
      c_hand.push_back(0.5 * c);
      h_hand.push_back(0.5 * std::tanh(0.5 * c));
    }
    worst = std::max({worst, max_err(values(s.c), c_hand), max_err(values(s.h), h_hand)});
  }
  // Randomized cases against the straight-line reimplementation.
  Rng rng(2024);
  for (GateWiring w : {GateWiring::kStandard, GateWiring::kCustomized}) {
    for (int trial = 0; trial < 10; ++trial) {
      const std::size_t H = 2 + rng.index(6), F = 1 + rng.index(9), E = 1 + rng.index(5);
      auto p = cells::LstmParams<double>::init(w, H, F, E, rng);
      for (const auto& t : p.tensors())
        for (double& v : t.mutable_data()) v = rng.uniform(-1.5, 1.5);
      std::vector<double> h(H), c(H), r(F), e(E);
      for (double& v : h) v = rng.uniform(-1, 1);
      for (double& v : c) v = rng.uniform(-2, 2);
      for (double& v : r) v = rng.uniform(-2, 2);
      for (double& v : e) v = rng.uniform(-1, 1);
      const auto traced = cells::step_traced(p, {row(h), row(c)}, row(r), row(e));
      const auto named = step_named(p, {row(h), row(c)}, row(r), row(e));
      const auto o = tse::testing::oracle_step(p, {h, c}, r, e);
      worst = std::max({worst, max_err(values(traced.forget), o.f), max_err(values(traced.input), o.i),
                        max_err(values(traced.candidate), o.g), max_err(values(traced.output), o.o),
                        max_err(values(named.c), o.state.c), max_err(values(named.h), o.state.h)});
    }
  }
  verdict(worst < 1e-12,
          "cell equations: step_standard and step_customized vs hand values (all-zero parameters) and an "
          "independent scalar implementation (10 random cases per wiring), max abs error %.2e (need < 1e-12)",
          worst);
}

// ---- structure -------------------------------------------------------------

void structural_contract() {
  Rng rng(77);
  bool invariant = true;
  double standard_change = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t H = 8, F = 20, E = 6, N = 3;
    const auto pc = cells::LstmParams<double>::init(GateWiring::kCustomized, H, F, E, rng);
    const auto ps = cells::LstmParams<double>::init(GateWiring::kStandard, H, F, E, rng);
    const cells::LstmState<double> prev{random_tensor({N, H}, rng, -1, 1, false),
                                        random_tensor({N, H}, rng, -1, 1, false)};
    const auto e = random_tensor({N, E}, rng, -1, 1, false);
    const auto r1 = random_tensor({N, F}, rng, -3, 3, false), r2 = random_tensor({N, F}, rng, -3, 3, false);
    invariant = invariant && values(cells::step_traced(pc, prev, r1, e).forget) ==
                                 values(cells::step_traced(pc, prev, r2, e).forget);
    standard_change = std::max(standard_change, max_err(values(cells::step_traced(ps, prev, r1, e).forget),
                                                        values(cells::step_traced(ps, prev, r2, e).forget)));
  }
  detail("customized forget gate bit-identical under 20 changes of r_t: %s; standard gate moves by up to %.3f",
         invariant ? "yes" : "no", standard_change);

  // Census of the full-size separator for both wirings.
  networks::SeparatorConfig cfg;
  Rng r1(1), r2(1);
  cfg.wiring = GateWiring::kStandard;
  const networks::Separator<float> s(cfg, r1);
  cfg.wiring = GateWiring::kCustomized;
  const networks::Separator<float> c(cfg, r2);
  std::map<std::string, ad::Shape> ss, cs;
  for (const auto& [n, t] : s.parameters()) ss[n] = t.shape();
  for (const auto& [n, t] : c.parameters()) cs[n] = t.shape();
  const std::size_t H = cfg.lstm_hidden, F = cfg.feature_size(), E = cfg.embed_dim;
  const ad::Shape wf = ss.count("lstm.W_f") ? ss["lstm.W_f"] : ad::Shape{};
  const ad::Shape we = cs.count("lstm.W_e") ? cs["lstm.W_e"] : ad::Shape{};
  std::size_t differing = 0;
  for (const auto& [n, shape] : ss) {
    if (n == "lstm.W_f" || n == "lstm.b_f") continue;
    if (!cs.count(n) || cs[n] != shape) ++differing;
  }
  const bool census = wf == ad::Shape{H, H + F + E} && we == ad::Shape{H, H + E} && !cs.count("lstm.W_f") &&
                      !ss.count("lstm.W_e") && differing == 0 && ss.size() == cs.size();
  detail("full-size census: W_f %s = hidden+features+embed (%zu+%zu+%zu), W_e %s = hidden+embed; "
         "%zu other tensors differ",
         ad::shape_string(wf).c_str(), H, F, E, ad::shape_string(we).c_str(), differing);
  verdict(invariant && census,
          "structural contract: customized forget gate exactly invariant to r_t; census W_e width %zu = %zu+%zu, "
          "W_f width %zu = %zu+%zu+%zu",
          we.size() == 2 ? we[1] : 0, H, E, wf.size() == 2 ? wf[1] : 0, H, F, E);
}

// ---- DSP -------------------------------------------------------------------

void dsp_identity() {
  Rng rng(9);
  double round_trip = 0.0, unit = 0.0;
  for (const double rate : {8000.0, 16000.0}) {
    const auto cfg = dsp::separator_stft(rate);
    for (int trial = 0; trial < 50; ++trial) {
      const auto x = random_signal(3 * cfg.frame_length + rng.index(8000), rng, rng.uniform(0.01, 1.0));
      const auto spec = dsp::stft(x, cfg);
      const auto in = dsp::interior(x.size(), cfg);
      round_trip = std::max(round_trip, max_abs_diff(x, dsp::istft(spec), in.begin, in.end));
      unit = std::max(unit, max_abs_diff(x, networks::apply_mask(spec, networks::unit_mask(spec)), in.begin, in.end));
    }
  }
  verdict(round_trip < 1e-6 && unit < 1e-6,
          "DSP: istft(stft(x)) interior error %.2e and unit-mask pipeline error %.2e on 50 random signals at each of "
          "8 and 16 kHz, sqrt-Hann 50%% overlap (need < 1e-6)",
          round_trip, unit);
}

// ---- SI-SNR ----------------------------------------------------------------

void si_snr_properties() {
  Rng rng(31);
  bool exact = true;
  double approx = 0.0, ten_db = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto s = random_signal(2000, rng);
    auto est = random_signal(2000, rng, rng.uniform(0.05, 1.0));
    for (std::size_t i = 0; i < est.size(); ++i) est[i] += s[i];
    const double base = losses::si_snr(est, s);
    for (double alpha : {2.0, 0.5, 8.0, 1.0 / 1024.0}) {
      auto scaled = est;
      for (double& v : scaled) v *= alpha;
      exact = exact && losses::si_snr(scaled, s) == base;
    }
    for (double alpha : {0.37, 3.1, 1e-3, 250.0}) {
      auto scaled = est;
      for (double& v : scaled) v *= alpha;
      approx = std::max(approx, std::abs(losses::si_snr(scaled, s) - base));
    }
    ten_db = std::max(ten_db, std::abs(losses::si_snr(tse::testing::with_orthogonal_noise(s, 10.0, rng), s) - 10.0));
  }
  verdict(exact && approx < 1e-9 && ten_db < 1e-9,
          "SI-SNR: power-of-two rescaling of the estimate %s, arbitrary rescaling within %.1e dB; orthogonal noise at "
          "10:1 power gives 10 dB within %.1e (need 1e-9)",
          exact ? "bit-identical" : "NOT bit-identical", approx, ten_db);
}

// ---- determinism -----------------------------------------------------------

void determinism(const fs::path& work) {
  const fs::path cfg = work / "determinism.json";
  const nlohmann::json j = {
      {"data", {{"train_samples", 96}, {"val_samples", 16}, {"test_samples", 8}, {"embedder_speakers", 24}}},
      {"train",
       {{"width_factor", 0.0625},
        {"batch_size", 8},
        {"learning_rate", 1e-3},
        {"max_epochs", 2},
        {"early_stop_patience", 2},
        {"precision", "float32"},
        {"embedder", {{"epochs", 3}}}}}};
  std::ofstream(cfg) << j.dump(2);
  const std::string c = "--config " + cfg.string() + " --seed 5 ";
  const Run gen = run_cli("gen-data " + c + "--out-dir " + (work / "det_data").string());
  const std::string manifest = (work / "det_data" / "manifest.json").string();
  const Run a = run_cli("train " + c + "--data " + manifest + " --out-dir " + (work / "det_a").string());
  const Run b = run_cli("train " + c + "--data " + manifest + " --out-dir " + (work / "det_b").string());
  const std::string la = slurp(work / "det_a" / "train_log.jsonl"), lb = slurp(work / "det_b" / "train_log.jsonl");
  const bool ckpt_same = slurp(work / "det_a" / "model.ckpt") == slurp(work / "det_b" / "model.ckpt");
  std::size_t lines = 0;
  for (char ch : la) lines += ch == '\n';
  if (gen.code != 0 || a.code != 0 || b.code != 0) detail("cli failure:\n%s%s%s", gen.output.c_str(), a.output.c_str(), b.output.c_str());
  verdict(gen.code == 0 && a.code == 0 && b.code == 0 && !la.empty() && la == lb,
          "determinism: two same-seed CLI training runs wrote %s logs (%zu JSONL lines, %zu bytes); checkpoints %s",
          la == lb ? "bit-identical" : "DIFFERENT", lines, la.size(), ckpt_same ? "identical" : "differ");
}

// ---- training ordering and oracle -----------------------------------------

struct Arm {
  std::string name;
  GateWiring wiring;
  losses::LossKind loss;
};

struct ArmResult {
  double delta = 0.0;
  double seconds = 0.0;
};

train::TrainConfig desk_config() {
  train::TrainConfig tc;
  tc.width_factor = 1.0 / 16.0;
  tc.precision = train::Precision::kFloat;
  tc.batch_size = 8;
  tc.learning_rate = 1e-3;
  tc.max_epochs = 6;
  tc.early_stop_patience = 6;
  return tc;
}

void training_ordering() {
  const data::DatasetConfig dc;  // 12 speakers, seed 1
  auto t0 = Clock::now();
  const data::Dataset ds = data::build_dataset(dc);
  detail("corpus: %zu speakers (%zu unseen), %zu train / %zu val / %zu test mixtures, %zu embedder utterances, %.1f s",
         dc.num_speakers, dc.test_speakers, ds.train.size(), ds.val.size(), ds.test.size(), ds.embedder_pool.size(),
         seconds_since(t0));

  // One pre-trained speaker embedder shared by every arm and seed.
  const train::TrainConfig base = desk_config();
  t0 = Clock::now();
  const auto embedder = train::train_embedder<float>(base.embedder_model(), base.embedder, ds.embedder_pool,
                                                     ds.sample_rate);
  const double embedder_seconds = seconds_since(t0);
  std::vector<data::LabeledUtterance> refs;
  for (const auto& s : ds.test) refs.push_back({s.target_speaker, s.reference});
  const auto sep = train::embedding_separation(embedder, refs, ds.sample_rate);
  detail("embedder: %.1f s; cosine on unseen-speaker references intra %.3f, inter %.3f", embedder_seconds, sep.intra,
         sep.inter);

  const std::vector<Arm> arms = {{"Standard/PLC", GateWiring::kStandard, losses::LossKind::plc()},
                                 {"Standard/SI-SNR", GateWiring::kStandard, losses::LossKind::si_snr()},
                                 {"Customized/SI-SNR", GateWiring::kCustomized, losses::LossKind::si_snr()}};
  const std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::vector<std::vector<ArmResult>> results(arms.size());
  for (std::uint64_t seed : seeds) {
    for (std::size_t a = 0; a < arms.size(); ++a) {
      train::TrainConfig tc = base;
      tc.wiring = arms[a].wiring;
      tc.loss = arms[a].loss;
      tc.seed = seed;
      t0 = Clock::now();
      auto model = train::make_extractor<float>(tc, ds.sample_rate);
      networks::restore_embedder(networks::make_embedder_checkpoint(embedder, model.stft()), model.embedder());
      const auto tr = train::train_separator(model, ds, tc);
      const auto rows = train::evaluate<float>(&model, ds.test, train::MaskMode::kModel, model.stft());
      const auto summary = losses::summarize(rows);
      const double secs = seconds_since(t0) + embedder_seconds;
      results[a].push_back({summary.mean_delta, secs});
      detail("%-18s seed %llu: unseen mean SI-SDR %.3f -> %.3f dB, delta %+.3f dB (best epoch %zu, %.0f s incl. "
             "embedder)",
             arms[a].name.c_str(), static_cast<unsigned long long>(seed), summary.mean_in, summary.mean_out,
             summary.mean_delta, tr.best_epoch, secs);
    }
    const double s_sisnr = results[1].back().delta, c_sisnr = results[2].back().delta;
    if (c_sisnr < s_sisnr) {
      detail("note: seed %llu inverts Customized/SI-SNR (%+.3f) below Standard/SI-SNR (%+.3f)",
             static_cast<unsigned long long>(seed), c_sisnr, s_sisnr);
    }
  }

  std::vector<double> means(arms.size(), 0.0);
  double slowest = 0.0;
  for (std::size_t a = 0; a < arms.size(); ++a) {
    for (const auto& r : results[a]) {
      means[a] += r.delta / static_cast<double>(seeds.size());
      slowest = std::max(slowest, r.seconds);
    }
  }
  bool positive = true;
  for (double m : means) positive = positive && m > 0.0;
  const bool ordered = means[2] >= means[1];
  verdict(positive && ordered && slowest <= 900.0,
          "training ordering: 3-seed mean unseen delta SI-SDR Standard/PLC %+.3f, Standard/SI-SNR %+.3f, "
          "Customized/SI-SNR %+.3f dB (need all > 0 and Customized >= Standard SI-SNR); slowest run %.0f s (<= 900)",
          means[0], means[1], means[2], slowest);

  const auto oracle = losses::summarize(
      train::evaluate<float>(nullptr, ds.test, train::MaskMode::kOracle, dsp::separator_stft(ds.sample_rate)));
  double best_model = -INFINITY;
  for (const auto& arm : results)
    for (const auto& r : arm) best_model = std::max(best_model, r.delta);
  verdict(oracle.mean_delta > 5.0 && best_model < oracle.mean_delta,
          "oracle bound: oracle mask mean delta SI-SDR %+.3f dB on the unseen test set (need > 5), best trained run "
          "%+.3f dB below it",
          oracle.mean_delta, best_model);
}

}  // namespace

int main() {
  const fs::path work = fs::temp_directory_path() / "tse_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);
  try {
    gradient_integrity();
    cell_oracle();
    structural_contract();
    dsp_identity();
    si_snr_properties();
    determinism(work);
    training_ordering();
  } catch (const std::exception& e) {
    verdict(false, "acceptance run aborted: %s", e.what());
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
