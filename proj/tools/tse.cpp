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

// Command-line entry points: gen-data, train, extract, evaluate, gradcheck.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tse/data/dataset.hpp"
#include "tse/data/manifest.hpp"
#include "tse/dsp/wav.hpp"
#include "tse/errors.hpp"
#include "tse/losses/report.hpp"
#include "tse/networks/checkpoint.hpp"
#include "tse/train/config.hpp"
#include "tse/train/gradcheck.hpp"
#include "tse/train/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using namespace tse;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> wiring;
  std::optional<std::string> loss;
  std::optional<double> width_factor;
  std::string out_dir;
};

void add_common(CLI::App* cmd, Common& c, bool model_flags) {
  cmd->add_option("--config", c.config_path, "JSON config file ({\"data\": {...}, \"train\": {...}})");
  cmd->add_option("--seed", c.seed, "Random seed (overrides the config)");
  cmd->add_option("--out-dir", c.out_dir, "Output directory");
  if (model_flags) {
    cmd->add_option("--wiring", c.wiring, "LSTM forget-gate wiring")->check(CLI::IsMember({"standard", "customized"}));
    cmd->add_option("--loss", c.loss, "Training loss")->check(CLI::IsMember({"plc", "sisnr"}));
    cmd->add_option("--width-factor", c.width_factor, "Layer-width multiplier relative to full size");
  }
}

struct RunConfig {
  data::DatasetConfig data;
  train::TrainConfig train;
};

json to_json(const RunConfig& r) { return {{"data", r.data}, {"train", r.train}}; }

RunConfig load_config(const Common& c) {
  RunConfig r;
  if (!c.config_path.empty()) {
    std::ifstream is(c.config_path);
    if (!is) throw ConfigError("cannot open config file " + c.config_path);
    json j;
    try {
      j = json::parse(is);
    } catch (const json::exception& e) {
      throw ConfigError("config file " + c.config_path + " is not valid JSON: " + e.what());
    }
    json_config::check_keys(j, {"data", "train"}, "config");
    if (j.contains("data")) data::from_json(j.at("data"), r.data);
    if (j.contains("train")) train::from_json(j.at("train"), r.train);
  }
  if (c.seed) {
    r.data.seed = *c.seed;
    r.train.seed = *c.seed;
  }
  if (c.wiring) r.train.wiring = cells::parse_wiring(*c.wiring);
  if (c.loss) {
    const double power = r.train.loss.power;
    r.train.loss = losses::LossKind::parse(*c.loss);
    if (r.train.loss.is_plc()) r.train.loss = losses::LossKind::plc(power);
  }
  if (c.width_factor) r.train.width_factor = *c.width_factor;
  return r;
}

fs::path prepare_out_dir(const std::string& dir, const json& effective) {
  if (dir.empty()) throw ConfigError("--out-dir is required");
  fs::create_directories(dir);
  std::ofstream os(fs::path(dir) / "config.json");
  os << effective.dump(2) << '\n';
  if (!os) throw DataError("cannot write " + (fs::path(dir) / "config.json").string());
  return dir;
}

// ---- gen-data ------------------------------------------------------------

int cmd_gen_data(const Common& c, const std::string& corpus) {
  const RunConfig r = load_config(c);
  r.data.validate();
  json effective = {{"data", r.data}};
  if (!corpus.empty()) effective["corpus"] = corpus;
  const fs::path out = prepare_out_dir(c.out_dir, effective);
  const data::Dataset ds = corpus.empty() ? data::build_dataset(r.data) : data::load_corpus(corpus, r.data);
  const fs::path manifest = data::write_dataset(ds, out);
  std::printf("wrote %zu train, %zu val, %zu test samples and %zu embedder utterances to %s\n", ds.train.size(),
              ds.val.size(), ds.test.size(), ds.embedder_pool.size(), manifest.string().c_str());
  return kExitOk;
}

// ---- train ---------------------------------------------------------------

template <typename T>
networks::Embedder<T> obtain_embedder(const train::TrainConfig& cfg, const data::Dataset& ds,
                                      const dsp::StftConfig& stft, const std::string& path, const fs::path& out,
                                      std::ofstream& log) {
  Rng rng(0);
  networks::Embedder<T> emb(cfg.embedder_model(), rng);
  if (!path.empty() && fs::exists(path)) {
    networks::restore_embedder(networks::read_checkpoint(path), emb);
    std::fprintf(stderr, "loaded embedder %s\n", path.c_str());
    return emb;
  }
  auto sink = [&](const json& j) {
    log << j.dump() << '\n';
    log.flush();
    std::fprintf(stderr, "embedder epoch %s loss %.4f\n", j.at("epoch").dump().c_str(), j.at("train_loss").get<double>());
  };
  auto trained = train::train_embedder<T>(cfg.embedder_model(), cfg.embedder, ds.embedder_pool, ds.sample_rate, sink);
  const std::string dest = path.empty() ? (out / "embedder.ckpt").string() : path;
  networks::save_checkpoint(dest, networks::make_embedder_checkpoint(trained, stft, {{"embedder_train", cfg.embedder}}));
  networks::restore_embedder(networks::make_embedder_checkpoint(trained, stft), emb);
  return emb;
}

template <typename T>
int run_train(const RunConfig& r, const Common& c, const std::string& manifest, const std::string& embedder_path) {
  const data::Dataset ds = data::read_dataset(manifest);
  json effective = to_json(r);
  effective["manifest"] = manifest;
  const fs::path out = prepare_out_dir(c.out_dir, effective);
  std::ofstream log(out / "train_log.jsonl", std::ios::app);
  if (!log) throw DataError("cannot open training log in " + out.string());

  auto model = train::make_extractor<T>(r.train, ds.sample_rate);
  const auto emb = obtain_embedder<T>(r.train, ds, model.stft(), embedder_path, out, log);
  networks::restore_embedder(networks::make_embedder_checkpoint(emb, model.stft()), model.embedder());

  auto sink = [&](const json& j) {
    log << j.dump() << '\n';
    log.flush();
    if (j.at("event") == "epoch") {
      std::fprintf(stderr, "epoch %s step %s val_loss %.6f\n", j.at("epoch").dump().c_str(), j.at("step").dump().c_str(),
                   j.at("val_loss").get<double>());
    }
  };
  const auto result = train::train_separator(model, ds, r.train, sink);
  networks::save_checkpoint((out / "model.ckpt").string(), result.best);
  std::printf("best val loss %.6f at epoch %zu after %zu steps; checkpoint %s\n", result.best_val_loss,
              result.best_epoch, result.steps, (out / "model.ckpt").string().c_str());
  return kExitOk;
}

int cmd_train(const Common& c, const std::string& manifest, const std::string& embedder_path) {
  const RunConfig r = load_config(c);
  r.train.validate();
  if (manifest.empty()) throw ConfigError("--data is required");
  return r.train.precision == train::Precision::kDouble ? run_train<double>(r, c, manifest, embedder_path)
                                                         : run_train<float>(r, c, manifest, embedder_path);
}

// ---- extract -------------------------------------------------------------

int cmd_extract(const Common& c, const std::string& ckpt, const std::string& mixture_path,
                const std::string& reference_path, const std::string& output, const std::string& target_path) {
  std::optional<cells::GateWiring> wiring;
  if (c.wiring) wiring = cells::parse_wiring(*c.wiring);
  auto model = networks::load_model<double>(networks::read_checkpoint(ckpt), wiring);
  const auto rate = static_cast<std::uint32_t>(std::lround(model.sample_rate()));
  const auto mixture = dsp::read_wav(mixture_path, rate).samples;
  const auto reference = dsp::read_wav(reference_path, rate).samples;
  const auto extracted = model.extract(mixture, reference);
  dsp::write_wav(output, {rate, extracted});
  std::printf("wrote %s (%zu samples)\n", output.c_str(), extracted.size());
  if (!target_path.empty()) {
    const auto target = dsp::read_wav(target_path, rate).samples;
    if (target.size() != mixture.size()) throw DataError("target and mixture lengths differ");
    const double in = losses::si_snr(mixture, target), out = losses::si_snr(extracted, target);
    std::printf("si_sdr_in %s dB  si_sdr_out %s dB  delta %s dB\n", losses::format_db(in).c_str(),
                losses::format_db(out).c_str(), losses::format_db(out - in).c_str());
  }
  return kExitOk;
}

// ---- evaluate ------------------------------------------------------------

int cmd_evaluate(const Common& c, const std::string& manifest, const std::string& ckpt, const std::string& mode_name,
                 const std::string& split) {
  if (manifest.empty()) throw ConfigError("--data is required");
  const auto mode = train::parse_mask_mode(mode_name);
  const data::Dataset ds = data::read_dataset(manifest);
  const std::vector<data::MixtureSample>* samples = nullptr;
  if (split == "test") samples = &ds.test;
  else if (split == "val") samples = &ds.val;
  else if (split == "train") samples = &ds.train;
  else throw ConfigError("unknown split '" + split + "' (expected train, val or test)");
  if (samples->empty()) throw DataError("manifest " + manifest + " has no " + split + " samples");

  std::optional<networks::Extractor<double>> model;
  if (mode == train::MaskMode::kModel) {
    if (ckpt.empty()) throw ConfigError("--checkpoint is required for --mask model");
    std::optional<cells::GateWiring> wiring;
    if (c.wiring) wiring = cells::parse_wiring(*c.wiring);
    model.emplace(networks::load_model<double>(networks::read_checkpoint(ckpt), wiring));
  }
  const auto rows = train::evaluate<double>(model ? &*model : nullptr, *samples, mode,
                                            dsp::separator_stft(ds.sample_rate));
  const fs::path out = prepare_out_dir(
      c.out_dir, {{"manifest", manifest}, {"checkpoint", ckpt}, {"mask", mode_name}, {"split", split}});
  std::ofstream os(out / "report.tsv");
  losses::write_report(os, rows);
  if (!os) throw DataError("cannot write report in " + out.string());
  const auto s = losses::summarize(rows);
  std::printf("%zu samples  mean si_sdr_in %s  mean si_sdr_out %s  mean delta %s dB\n", s.count,
              losses::format_db(s.mean_in).c_str(), losses::format_db(s.mean_out).c_str(),
              losses::format_db(s.mean_delta).c_str());
  return kExitOk;
}

// ---- gradcheck -----------------------------------------------------------

int cmd_gradcheck(const Common& c, bool corrupt) {
  train::GradCheckOptions opt;
  if (c.width_factor) opt.width_factor = *c.width_factor;
  if (c.seed) opt.seed = *c.seed;
  opt.corrupt = corrupt;
  const auto cases = train::run_gradcheck_suite(opt);
  double worst = 0.0;
  bool standard = false, customized = false;
  for (const auto& k : cases) {
    std::printf("%-32s %-10s params %6zu  rel_error %.3e  (elementwise %.1e)  %6.2fs  %s\n",
                k.name.c_str(), k.wiring.empty() ? "-" : k.wiring.c_str(), k.params, k.error(),
                k.result.max_rel_error, k.seconds, k.passed() ? "ok" : "FAIL");
    worst = std::max(worst, k.error());
    standard = standard || k.wiring == "standard";
    customized = customized || k.wiring == "customized";
  }
  std::printf("wirings covered: %s%s\n", standard ? "standard " : "", customized ? "customized" : "");
  const bool pass = worst < train::kGradCheckTolerance && standard && customized;
  std::printf("worst relative error %.3e (tolerance %.0e): %s\n", worst, train::kGradCheckTolerance,
              pass ? "PASS" : "FAIL");
  return pass ? kExitOk : kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Speaker-conditioned target speaker extraction"};
  app.require_subcommand(1);

  Common gen, trn, ext, evl, grd;
  std::string corpus;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate the synthetic corpus (or index a WAV corpus)");
  add_common(gen_cmd, gen, false);
  gen_cmd->add_option("--corpus", corpus, "Speaker-per-directory WAV corpus instead of synthetic speakers");

  std::string train_data, embedder_path;
  auto* train_cmd = app.add_subcommand("train", "Train the separator (and the embedder if needed)");
  add_common(train_cmd, trn, true);
  train_cmd->add_option("--data", train_data, "Dataset manifest")->required();
  train_cmd->add_option("--embedder", embedder_path, "Embedder checkpoint to load, or where to save a trained one");

  std::string ext_ckpt, ext_mix, ext_ref, ext_out, ext_target;
  auto* ext_cmd = app.add_subcommand("extract", "Extract the reference speaker from a mixture");
  add_common(ext_cmd, ext, true);
  ext_cmd->add_option("--checkpoint", ext_ckpt, "Model checkpoint")->required();
  ext_cmd->add_option("--mixture", ext_mix, "Mixture WAV")->required();
  ext_cmd->add_option("--reference", ext_ref, "Reference WAV of the target speaker")->required();
  ext_cmd->add_option("--output", ext_out, "Output WAV")->required();
  ext_cmd->add_option("--target", ext_target, "Clean target WAV for scoring");

  std::string evl_data, evl_ckpt, evl_mask = "model", evl_split = "test";
  auto* evl_cmd = app.add_subcommand("evaluate", "Score a model on a manifest split");
  add_common(evl_cmd, evl, true);
  evl_cmd->add_option("--data", evl_data, "Dataset manifest")->required();
  evl_cmd->add_option("--checkpoint", evl_ckpt, "Model checkpoint (mask model)");
  evl_cmd->add_option("--mask", evl_mask, "Mask source")->check(CLI::IsMember({"model", "identity", "oracle"}));
  evl_cmd->add_option("--split", evl_split, "Manifest split")->check(CLI::IsMember({"train", "val", "test"}));

  bool corrupt = false;
  auto* grd_cmd = app.add_subcommand("gradcheck", "Verify gradients against finite differences");
  add_common(grd_cmd, grd, true);
  grd_cmd->add_flag("--corrupt-gradient", corrupt, "Negative control: perturb analytic gradients");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*gen_cmd) return cmd_gen_data(gen, corpus);
    if (*train_cmd) return cmd_train(trn, train_data, embedder_path);
    if (*ext_cmd) return cmd_extract(ext, ext_ckpt, ext_mix, ext_ref, ext_out, ext_target);
    if (*evl_cmd) return cmd_evaluate(evl, evl_data, evl_ckpt, evl_mask, evl_split);
    if (*grd_cmd) return cmd_gradcheck(grd, corrupt);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kExitNumerical;
  } catch (const Error& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
  return kExitFailure;
}
