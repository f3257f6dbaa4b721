// Copyright 2026 The PADE-ReID Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line front end: `pade <subcommand> ...`. The entry point lives here
// (rather than in tools/) so that tests can drive it in-process.

#pragma once

#include <CLI11.hpp>
#include <Eigen/Core>
#include <json.hpp>

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pade/ablation.hpp"
#include "pade/augment.hpp"
#include "pade/checkpoint.hpp"
#include "pade/config.hpp"
#include "pade/data.hpp"
#include "pade/error.hpp"
#include "pade/eval.hpp"
#include "pade/image_io.hpp"
#include "pade/trainer.hpp"

#ifndef PADE_VERSION
#define PADE_VERSION "0.0.0"
#endif

namespace pade {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

namespace cli_detail {

namespace fs = std::filesystem;

struct ConfigArgs {
  std::string config;
  std::vector<std::string> overrides;

  void add_to(CLI::App* app, bool required) {
    auto* opt = app->add_option("--config", config, "YAML run configuration");
    opt->check(CLI::ExistingFile);
    if (required) opt->required();
    app->add_option("--set", overrides, "override a config value: section.key=value (repeatable)");
  }

  RunConfig load() const {
    if (config.empty()) {
      YAML::Node root(YAML::NodeType::Map);
      for (const auto& o : overrides) apply_override(root, o);
      return config_from_yaml(root);
    }
    return load_config(config, overrides);
  }
};

inline std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ConfigError("not a number in list: '" + tok + "'");
    }
  }
  if (out.empty()) throw ConfigError("empty list: '" + text + "'");
  return out;
}

/// An on-disk dataset when `data` is given, otherwise the synthetic set
/// described by the config.
inline DatasetSplits load_data(const std::string& data, const RunConfig& cfg) {
  if (!data.empty()) return load_directory(data);
  return generate_synthetic(cfg.synthetic);
}

inline void report_skips(const DatasetSplits& d) {
  for (const auto& s : d.skipped) std::cerr << "skipped " << s.path << ": " << s.reason << '\n';
}

inline void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

/// Records which checkpoint a run directory was produced from.
inline nlohmann::json checkpoint_ref(const fs::path& ckpt) {
  return {{"path", fs::absolute(ckpt).string()}, {"git_blob_sha1", git_blob_hash(ckpt)}};
}

inline nlohmann::json retrieval_json(const RetrievalResult& r) {
  nlohmann::json cmc = nlohmann::json::object();
  for (int k : {1, 5, 10, 20})
    if (k <= static_cast<int>(r.cmc.size())) cmc["rank" + std::to_string(k)] = r.cmc[k - 1];
  return {{"map", r.map}, {"rank1", r.rank1()}, {"cmc", cmc}, {"num_valid_queries", r.num_valid},
          {"num_excluded_queries", r.num_excluded}};
}

inline RawImage montage(const std::vector<RawImage>& tiles, int gap = 4) {
  int h = 0, w = 0;
  for (const auto& t : tiles) {
    h = std::max(h, t.height);
    w += t.width;
  }
  w += gap * static_cast<int>(tiles.size() - 1);
  RawImage out(h, w, 3);
  std::fill(out.pixels.begin(), out.pixels.end(), std::uint8_t{255});
  int x0 = 0;
  for (const auto& t : tiles) {
    for (int y = 0; y < t.height; ++y)
      for (int x = 0; x < t.width; ++x)
        for (int c = 0; c < 3; ++c) out.at(y, x0 + x, c) = t.at(y, x, c);
    x0 += t.width + gap;
  }
  return out;
}

}  // namespace cli_detail

/// Parses argv, dispatches, and maps failures to exit codes:
/// 0 success, 1 runtime failure, 2 usage or configuration error.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  namespace fs = std::filesystem;
  using namespace cli_detail;

  CLI::App app{"PADE occluded person re-identification: data, training, evaluation", "pade"};
  app.set_version_flag("--version", std::string("pade ") + PADE_VERSION);
  app.require_subcommand(1);

  // data synth
  auto* data_cmd = app.add_subcommand("data", "dataset utilities");
  data_cmd->require_subcommand(1);
  auto* synth = data_cmd->add_subcommand("synth", "render the synthetic dataset to disk");
  ConfigArgs synth_cfg;
  std::string synth_out;
  synth->add_option("--spec", synth_cfg.config, "YAML file; its `synthetic` section is used")
      ->check(CLI::ExistingFile);
  synth->add_option("--set", synth_cfg.overrides, "override: section.key=value (repeatable)");
  synth->add_option("--out", synth_out, "output dataset root")->required();

  // augment-preview
  auto* preview = app.add_subcommand("augment-preview", "write base / erased / cropped views of one image");
  ConfigArgs preview_cfg;
  preview_cfg.add_to(preview, false);
  std::string preview_image, preview_out;
  std::uint64_t preview_seed = 0;
  preview->add_option("--image", preview_image, "input RGB image (default: first synthetic train image)")
      ->check(CLI::ExistingFile);
  preview->add_option("--out", preview_out, "output directory")->required();
  preview->add_option("--seed", preview_seed, "augmentation seed");

  // train
  auto* train = app.add_subcommand("train", "train a model");
  ConfigArgs train_cfg;
  train_cfg.add_to(train, true);
  std::string train_data, train_out, train_resume;
  std::optional<std::uint64_t> train_seed;
  bool deterministic = false;
  train->add_option("--data", train_data, "dataset root (default: synthetic data from the config)")
      ->check(CLI::ExistingDirectory);
  train->add_option("--out", train_out, "run directory")->required();
  train->add_option("--seed", train_seed, "trainer seed (overrides trainer.seed)");
  train->add_option("--resume", train_resume, "checkpoint to resume from")->check(CLI::ExistingFile);
  train->add_flag("--deterministic", deterministic, "single-threaded, bit-reproducible execution");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on query/gallery");
  std::string eval_ckpt, eval_data, eval_out = "metrics.json";
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", eval_data, "dataset root (default: synthetic data from the checkpoint config)")
      ->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--out", eval_out, "metrics JSON path");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "occlusion sweep over the erase probability");
  std::string sweep_ckpt, sweep_data, sweep_out, sweep_alphas;
  sweep->add_option("--checkpoint", sweep_ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
  sweep->add_option("--data", sweep_data, "dataset root (default: synthetic data from the checkpoint config)")
      ->check(CLI::ExistingDirectory);
  sweep->add_option("--alphas", sweep_alphas, "comma-separated erase probabilities, e.g. 0,0.2,0.4");
  sweep->add_option("--out", sweep_out, "output directory")->required();

  // ablate
  auto* ablate = app.add_subcommand("ablate", "train and evaluate the ablation grid");
  ConfigArgs ablate_cfg;
  ablate_cfg.add_to(ablate, true);
  std::string ablate_data, ablate_out, ablate_seeds = "0,1,2";
  ablate->add_option("--data", ablate_data, "dataset root (default: synthetic data from the config)")
      ->check(CLI::ExistingDirectory);
  ablate->add_option("--seeds", ablate_seeds, "comma-separated trainer seeds");
  ablate->add_option("--out", ablate_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth) {
      RunConfig cfg = synth_cfg.load();
      DatasetSplits d = generate_synthetic(cfg.synthetic);
      write_dataset(d, synth_out);
      out << "wrote " << d.train.size() << " train, " << d.query.size() << " query, "
          << d.gallery.size() << " gallery images to " << synth_out << '\n';
      return kExitOk;
    }

    if (*preview) {
      const RunConfig cfg = preview_cfg.load();
      const RawImage src = preview_image.empty() ? generate_synthetic(cfg.synthetic).train.items.front().image
                                                 : load_image(preview_image);
      const ImageTriplet t = parallel_augment(src, cfg.augment, preview_seed);
      const auto& a = cfg.augment;
      std::vector<RawImage> views{denormalize(t.base, a.norm_mean, a.norm_std), denormalize(t.erased, a.norm_mean, a.norm_std),
                                  denormalize(t.cropped, a.norm_mean, a.norm_std)};
      fs::create_directories(preview_out);
      save_image(fs::path(preview_out) / "base.png", views[0]);
      save_image(fs::path(preview_out) / "erased.png", views[1]);
      save_image(fs::path(preview_out) / "cropped.png", views[2]);
      save_image(fs::path(preview_out) / "triplet.png", montage(views));
      const auto rect = [](const OpTrace& tr) {
        return nlohmann::json{{"applied", tr.applied}, {"fallback", tr.fallback}, {"attempts", tr.attempts},
                              {"top", tr.rect.top}, {"left", tr.rect.left}, {"height", tr.rect.height}, {"width", tr.rect.width}};
      };
      write_json(fs::path(preview_out) / "trace.json",
                 {{"seed", preview_seed}, {"erase", rect(t.rng_trace.erase)}, {"crop", rect(t.rng_trace.crop)}});
      out << "wrote " << (fs::path(preview_out) / "triplet.png").string() << '\n';
      return kExitOk;
    }

    if (*train) {
      if (deterministic) Eigen::setNbThreads(1);
      RunConfig cfg = train_cfg.load();
      if (train_seed) cfg.trainer.seed = *train_seed;
      cfg.resolve();
      const DatasetSplits data = load_data(train_data, cfg);
      report_skips(data);
      FitOptions opts;
      opts.out_dir = train_out;
      if (!train_resume.empty()) opts.resume_from = train_resume;
      opts.val_query = &data.query;
      opts.val_gallery = &data.gallery;
      opts.on_epoch = [&](int epoch, const std::vector<StepLog>& log) {
        double sum = 0.0;
        for (const auto& s : log) sum += s.loss.total;
        char buf[128];
        std::snprintf(buf, sizeof(buf), "epoch %d/%d  lr %.5g  mean loss %.4f\n", epoch + 1,
                      cfg.trainer.max_epoch, log.empty() ? 0.0 : log.front().lr,
                      log.empty() ? 0.0 : sum / static_cast<double>(log.size()));
        out << buf << std::flush;
      };
      const FitResult r = fit(data.train, cfg, opts);
      const RetrievalResult ev = evaluate_model(r.model, data.query, data.gallery, cfg);
      nlohmann::json run = {{"checkpoint", checkpoint_ref(r.last_checkpoint)},
                            {"epochs_completed", r.epochs_completed},
                            {"global_step", r.global_step},
                            {"deterministic", deterministic},
                            {"test", retrieval_json(ev)}};
      if (!train_resume.empty()) run["resumed_from"] = checkpoint_ref(train_resume);
      write_json(fs::path(train_out) / "run.json", run);
      out << "mAP " << ev.map << "  Rank-1 " << ev.rank1() << '\n';
      return kExitOk;
    }

    if (*eval_cmd || *sweep) {
      const std::string& ckpt = *eval_cmd ? eval_ckpt : sweep_ckpt;
      const CheckpointState state = load_checkpoint(ckpt);
      const Model model = model_from_checkpoint(state);
      const DatasetSplits data = load_data(*eval_cmd ? eval_data : sweep_data, state.config);
      report_skips(data);
      if (*eval_cmd) {
        const RetrievalResult r = evaluate_model(model, data.query, data.gallery, state.config);
        const fs::path path(eval_out);
        if (path.has_parent_path()) fs::create_directories(path.parent_path());
        nlohmann::json j = retrieval_json(r);
        j["metric"] = config_detail::metric_name(state.config.eval.metric);
        j["descriptor_dim"] = model.descriptor_dim();
        j["checkpoint"] = checkpoint_ref(ckpt);
        write_json(path, j);
        save_config(path.parent_path().empty() ? fs::path("config.yaml") : path.parent_path() / "config.yaml",
                    state.config);
        out << "mAP " << r.map << "  Rank-1 " << r.rank1() << '\n';
        return kExitOk;
      }
      const std::vector<double> alphas = sweep_alphas.empty() ? state.config.eval.alphas : parse_list(sweep_alphas);
      const auto rows = occlusion_sweep(model, data.query, data.gallery, state.config, alphas);
      fs::create_directories(sweep_out);
      write_sweep_csv(fs::path(sweep_out) / "sweep.csv", rows);
      plot_sweep(fs::path(sweep_out) / "sweep.png", rows);
      save_config(fs::path(sweep_out) / "config.yaml", state.config);
      write_json(fs::path(sweep_out) / "run.json", {{"checkpoint", checkpoint_ref(ckpt)}});
      for (const auto& r : rows) out << "alpha " << r.alpha << "  mAP " << r.map << "  Rank-1 " << r.rank1 << '\n';
      return kExitOk;
    }

    if (*ablate) {
      RunConfig cfg = ablate_cfg.load();
      std::vector<std::uint64_t> seeds;
      for (double s : parse_list(ablate_seeds)) {
        if (s < 0 || s != static_cast<double>(static_cast<std::uint64_t>(s)))
          throw ConfigError("seeds must be non-negative integers");
        seeds.push_back(static_cast<std::uint64_t>(s));
      }
      const DatasetSplits data = load_data(ablate_data, cfg);
      report_skips(data);
      fs::create_directories(ablate_out);
      save_config(fs::path(ablate_out) / "config.yaml", cfg);
      const auto results = run_ablation(data, cfg, seeds, [&](const std::string& row, std::uint64_t seed,
                                                              const RetrievalResult& r) {
        out << row << " seed " << seed << "  mAP " << r.map << "  Rank-1 " << r.rank1() << '\n' << std::flush;
      });
      write_ablation_csv(fs::path(ablate_out) / "ablation.csv", results);
      for (const auto& r : results) out << r.name << "  mean mAP " << r.mean_map() << '\n';
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace pade
