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

// Ablation grid: each row toggles one component of the pipeline on top of a
// shared base configuration, trains with shared seeds and evaluates on the
// same query/gallery split.

#pragma once

#include <yaml-cpp/yaml.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "pade/config.hpp"
#include "pade/data.hpp"
#include "pade/error.hpp"
#include "pade/eval.hpp"
#include "pade/trainer.hpp"

namespace pade {

struct AblationRow {
  std::string name;
  PipelineConfig pipeline;
};

/// The five rows in table order. The baseline trains a single branch with the
/// serial augmentation chain; every later row switches on one more component.
inline std::vector<AblationRow> ablation_grid() {
  return {
      {"baseline", {.parallel = false, .erase_branch = false, .crop_branch = false, .dual_enhance = false}},
      {"pam_erase_only", {.parallel = true, .erase_branch = true, .crop_branch = false, .dual_enhance = false}},
      {"pam_crop_only", {.parallel = true, .erase_branch = false, .crop_branch = true, .dual_enhance = false}},
      {"pam", {.parallel = true, .erase_branch = true, .crop_branch = true, .dual_enhance = false}},
      {"pam_des", {.parallel = true, .erase_branch = true, .crop_branch = true, .dual_enhance = true}},
  };
}

inline RunConfig ablation_config(const RunConfig& base, const AblationRow& row, std::uint64_t seed) {
  RunConfig c = base;
  c.pipeline = row.pipeline;
  c.trainer.seed = seed;
  c.resolve();
  return c;
}

namespace ablation_detail {

inline void flatten(const YAML::Node& node, const std::string& prefix,
                    std::map<std::string, std::string>& out) {
  if (node.IsMap()) {
    for (const auto& kv : node) {
      const std::string key = kv.first.as<std::string>();
      flatten(kv.second, prefix.empty() ? key : prefix + "." + key, out);
    }
    return;
  }
  YAML::Emitter e;
  e.SetDoublePrecision(17);
  e << YAML::Flow << node;
  out[prefix] = e.c_str();
}

}  // namespace ablation_detail

/// Dotted keys whose serialized values differ between two configs.
inline std::vector<std::string> config_diff(const RunConfig& a, const RunConfig& b) {
  std::map<std::string, std::string> fa, fb;
  ablation_detail::flatten(config_to_yaml(a), "", fa);
  ablation_detail::flatten(config_to_yaml(b), "", fb);
  std::vector<std::string> keys;
  for (const auto& [k, v] : fa) {
    auto it = fb.find(k);
    if (it == fb.end() || it->second != v) keys.push_back(k);
  }
  for (const auto& [k, v] : fb)
    if (!fa.count(k)) keys.push_back(k);
  return keys;
}

/// Every row must differ from the baseline only in `pipeline.*` keys.
/// Returns the offending keys (empty when the audit passes).
inline std::vector<std::string> audit_ablation_configs(const RunConfig& base, std::uint64_t seed) {
  const auto grid = ablation_grid();
  const RunConfig ref = ablation_config(base, grid.front(), seed);
  std::vector<std::string> bad;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    for (const auto& key : config_diff(ref, ablation_config(base, grid[i], seed))) {
      if (key.rfind("pipeline.", 0) != 0) bad.push_back(grid[i].name + ":" + key);
    }
  }
  return bad;
}

struct AblationResult {
  std::string name;
  std::vector<double> maps, rank1s;  // one per seed
  double mean_map() const { return mean(maps); }
  double mean_rank1() const { return mean(rank1s); }

 private:
  static double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  }
};

using AblationProgress =
    std::function<void(const std::string& row, std::uint64_t seed, const RetrievalResult&)>;

/// Trains and evaluates every row for every seed. Rows sharing a seed see the
/// same batches and the same per-sample augmentation seeds.
inline std::vector<AblationResult> run_ablation(const DatasetSplits& data, const RunConfig& base,
                                                const std::vector<std::uint64_t>& seeds,
                                                const AblationProgress& progress = {}) {
  if (seeds.empty()) throw ConfigError("ablate: at least one seed is required");
  const auto bad = audit_ablation_configs(base, seeds.front());
  if (!bad.empty()) throw ConfigError("ablate: rows differ outside the pipeline section: " + bad.front());
  std::vector<AblationResult> out;
  for (const auto& row : ablation_grid()) {
    AblationResult res{row.name, {}, {}};
    for (std::uint64_t seed : seeds) {
      const RunConfig cfg = ablation_config(base, row, seed);
      const FitResult fitted = fit(data.train, cfg);
      const RetrievalResult r = evaluate_model(fitted.model, data.query, data.gallery, cfg);
      res.maps.push_back(r.map);
      res.rank1s.push_back(r.rank1());
      if (progress) progress(row.name, seed, r);
    }
    out.push_back(std::move(res));
  }
  return out;
}

/// One row per configuration: mean mAP / Rank-1 followed by per-seed values.
inline void write_ablation_csv(const std::filesystem::path& path,
                               const std::vector<AblationResult>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "config,map,rank1";
  const std::size_t n = rows.empty() ? 0 : rows.front().maps.size();
  for (std::size_t s = 0; s < n; ++s) out << ",map_seed" << s << ",rank1_seed" << s;
  out << '\n';
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f", r.mean_map(), r.mean_rank1());
    out << r.name << ',' << buf;
    for (std::size_t s = 0; s < r.maps.size(); ++s) {
      std::snprintf(buf, sizeof(buf), ",%.6f,%.6f", r.maps[s], r.rank1s[s]);
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace pade
