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

// Run configuration: every module's settings in one validated structure,
// read from and written to YAML with one top-level section per module.

#pragma once

#include <yaml-cpp/yaml.h>

#include <charconv>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pade/augment.hpp"
#include "pade/backbone.hpp"
#include "pade/data.hpp"
#include "pade/error.hpp"
#include "pade/objective.hpp"

namespace pade {

struct TrainConfig {
  double lr = 0.008;
  std::vector<int> lr_decay_epochs{40, 70};
  double lr_decay_factor = 0.1;
  int warmup_epochs = 0;  // linear ramp: epoch e < W trains at lr * (e + 1) / W
  int max_epoch = 170;
  int batch_size = 32;
  int p = 8;  // identities per batch
  int k = 4;  // instances per identity
  double weight_decay = 0.0004;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  int steps_per_epoch = 0;   // 0: floor(train size / batch size), at least 1
  int checkpoint_every = 1;  // epochs
  int eval_every = 0;        // epochs; 0 disables best-by-mAP tracking

  void validate() const {
    if (p * k != batch_size) {
      throw ConfigError("trainer: p * k (" + std::to_string(p * k) + ") must equal batch_size (" +
                        std::to_string(batch_size) + ")");
    }
    if (p < 2 || k < 2) throw ConfigError("trainer: triplet mining needs p >= 2 and k >= 2");
    if (max_epoch < 1) throw ConfigError("trainer: max_epoch must be >= 1");
    for (std::size_t i = 0; i < lr_decay_epochs.size(); ++i) {
      if (lr_decay_epochs[i] < 0 || lr_decay_epochs[i] >= max_epoch) {
        throw ConfigError("trainer: decay epoch " + std::to_string(lr_decay_epochs[i]) +
                          " must lie in [0, max_epoch)");
      }
      if (i > 0 && lr_decay_epochs[i] <= lr_decay_epochs[i - 1]) {
        throw ConfigError("trainer: decay epochs must be strictly increasing");
      }
    }
    if (!(lr >= 0.0) || !(lr_decay_factor > 0.0) || !(weight_decay >= 0.0)) {
      throw ConfigError("trainer: lr, weight_decay must be >= 0 and lr_decay_factor > 0");
    }
    if (warmup_epochs < 0 || warmup_epochs >= max_epoch)
      throw ConfigError("trainer: warmup_epochs must lie in [0, max_epoch)");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("trainer: momentum must lie in [0, 1)");
    if (steps_per_epoch < 0 || checkpoint_every < 1 || eval_every < 0) {
      throw ConfigError("trainer: steps_per_epoch >= 0, checkpoint_every >= 1, eval_every >= 0");
    }
  }
};

/// Which parts of the method are active; the ablation grid toggles these.
struct PipelineConfig {
  bool parallel = true;      // false: single branch with the serial augmentation chain
  bool erase_branch = true;  // parallel mode only
  bool crop_branch = true;   // parallel mode only
  bool dual_enhance = true;

  friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;
};

enum class Metric { kEuclidean, kCosine };

struct EvalConfig {
  Metric metric = Metric::kEuclidean;
  int batch_size = 64;
  int max_rank = 20;
  std::vector<double> alphas{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  std::uint64_t sweep_seed = 7;
  bool perturb_gallery = true;

  void validate() const {
    if (batch_size < 1 || max_rank < 1) throw ConfigError("eval: batch_size and max_rank must be >= 1");
    for (double a : alphas)
      if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("eval: alphas must lie in [0, 1]");
  }
};

struct RunConfig {
  AugmentConfig augment;
  BackboneConfig backbone;
  ObjectiveConfig objective;
  TrainConfig trainer;
  PipelineConfig pipeline;
  EvalConfig eval;
  SyntheticSpec synthetic;

  /// Propagates shared fields (train size) and validates every section.
  void resolve() {
    backbone.train_size = augment.train_size;
    augment.validate();
    backbone.validate();
    objective.validate();
    trainer.validate();
    eval.validate();
    synthetic.validate();
  }
};

namespace config_detail {

template <typename T>
void read(const YAML::Node& sec, const char* key, T& out, std::set<std::string>& seen) {
  seen.insert(key);
  if (const YAML::Node n = sec[key]) {
    try {
      out = n.as<T>();
    } catch (const YAML::Exception& e) {
      throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
  }
}

inline void read_range(const YAML::Node& sec, const char* key, Range& out,
                       std::set<std::string>& seen) {
  std::vector<double> v{out.lo, out.hi};
  read(sec, key, v, seen);
  if (v.size() != 2) throw ConfigError(std::string("config key '") + key + "' needs [lo, hi]");
  out = {v[0], v[1]};
}

inline void read_size(const YAML::Node& sec, const char* key, Size2& out,
                      std::set<std::string>& seen) {
  std::vector<int> v{out.height, out.width};
  read(sec, key, v, seen);
  if (v.size() != 2) throw ConfigError(std::string("config key '") + key + "' needs [h, w]");
  out = {v[0], v[1]};
}

inline void read_triple(const YAML::Node& sec, const char* key, std::array<float, 3>& out,
                        std::set<std::string>& seen) {
  std::vector<float> v(out.begin(), out.end());
  read(sec, key, v, seen);
  if (v.size() != 3) throw ConfigError(std::string("config key '") + key + "' needs 3 values");
  std::copy(v.begin(), v.end(), out.begin());
}

inline void reject_unknown(const YAML::Node& sec, const std::string& name,
                           const std::set<std::string>& seen) {
  if (!sec) return;
  if (!sec.IsMap()) throw ConfigError("config section [" + name + "] must be a mapping");
  for (const auto& kv : sec) {
    const auto key = kv.first.as<std::string>();
    if (!seen.count(key)) throw ConfigError("unknown config key " + name + "." + key);
  }
}

/// Shortest text that parses back to exactly the same value.
template <typename T>
YAML::Node num(T v) {
  char buf[48];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return YAML::Node(std::string(buf, r.ptr));
}

inline YAML::Node flow_floats(const std::array<float, 3>& v) {
  YAML::Node n(YAML::NodeType::Sequence);
  for (float x : v) n.push_back(num(x));
  n.SetStyle(YAML::EmitterStyle::Flow);
  return n;
}

inline YAML::Node flow(const std::vector<double>& v) {
  YAML::Node n(YAML::NodeType::Sequence);
  for (double x : v) n.push_back(num(x));
  n.SetStyle(YAML::EmitterStyle::Flow);
  return n;
}
template <typename T>
YAML::Node flow_of(std::initializer_list<T> v) {
  YAML::Node n(YAML::NodeType::Sequence);
  for (const T& x : v) n.push_back(x);
  n.SetStyle(YAML::EmitterStyle::Flow);
  return n;
}

inline std::string metric_name(Metric m) { return m == Metric::kCosine ? "cosine" : "euclidean"; }

inline Metric parse_metric(const std::string& s) {
  if (s == "euclidean") return Metric::kEuclidean;
  if (s == "cosine") return Metric::kCosine;
  throw ConfigError("eval.metric must be 'euclidean' or 'cosine', got '" + s + "'");
}

}  // namespace config_detail

/// Reads a config tree; absent keys keep their defaults, unknown keys are errors.
inline RunConfig config_from_yaml(const YAML::Node& root) {
  using namespace config_detail;
  RunConfig c;
  if (root && !root.IsNull() && !root.IsMap()) throw ConfigError("config root must be a mapping");
  static const std::set<std::string> kSections{"augment", "backbone", "objective", "trainer",
                                               "pipeline", "eval",     "synthetic"};
  if (root && root.IsMap()) {
    for (const auto& kv : root) {
      const auto name = kv.first.as<std::string>();
      if (!kSections.count(name)) throw ConfigError("unknown config section [" + name + "]");
    }
  }
  {
    const YAML::Node s = root["augment"];
    std::set<std::string> seen;
    auto& a = c.augment;
    read_size(s, "train_size", a.train_size, seen);
    read(s, "pad", a.pad, seen);
    read(s, "erase_prob", a.erase_prob, seen);
    read_range(s, "erase_area_range", a.erase_area_range, seen);
    read_range(s, "erase_aspect_range", a.erase_aspect_range, seen);
    read_triple(s, "erase_fill", a.erase_fill, seen);
    read_range(s, "crop_scale_range", a.crop_scale_range, seen);
    read_range(s, "crop_aspect_range", a.crop_aspect_range, seen);
    read_triple(s, "norm_mean", a.norm_mean, seen);
    read_triple(s, "norm_std", a.norm_std, seen);
    read(s, "seed", a.seed, seen);
    read(s, "max_attempts", a.max_attempts, seen);
    read(s, "flip_prob", a.flip_prob, seen);
    read(s, "serial_erase_prob", a.serial_erase_prob, seen);
    reject_unknown(s, "augment", seen);
  }
  {
    const YAML::Node s = root["backbone"];
    std::set<std::string> seen;
    auto& b = c.backbone;
    read(s, "patch_size", b.patch_size, seen);
    read(s, "embed_dim", b.embed_dim, seen);
    read(s, "depth", b.depth, seen);
    read(s, "heads", b.heads, seen);
    read(s, "mlp_ratio", b.mlp_ratio, seen);
    read(s, "n_locals", b.n_locals, seen);
    read(s, "final_norm", b.final_norm, seen);
    reject_unknown(s, "backbone", seen);
  }
  {
    const YAML::Node s = root["objective"];
    std::set<std::string> seen;
    read(s, "margin", c.objective.margin, seen);
    read(s, "label_smoothing", c.objective.label_smoothing, seen);
    reject_unknown(s, "objective", seen);
  }
  {
    const YAML::Node s = root["trainer"];
    std::set<std::string> seen;
    auto& t = c.trainer;
    read(s, "lr", t.lr, seen);
    read(s, "lr_decay_epochs", t.lr_decay_epochs, seen);
    read(s, "lr_decay_factor", t.lr_decay_factor, seen);
    read(s, "warmup_epochs", t.warmup_epochs, seen);
    read(s, "max_epoch", t.max_epoch, seen);
    read(s, "batch_size", t.batch_size, seen);
    read(s, "p", t.p, seen);
    read(s, "k", t.k, seen);
    read(s, "weight_decay", t.weight_decay, seen);
    read(s, "momentum", t.momentum, seen);
    read(s, "seed", t.seed, seen);
    read(s, "steps_per_epoch", t.steps_per_epoch, seen);
    read(s, "checkpoint_every", t.checkpoint_every, seen);
    read(s, "eval_every", t.eval_every, seen);
    reject_unknown(s, "trainer", seen);
  }
  {
    const YAML::Node s = root["pipeline"];
    std::set<std::string> seen;
    auto& p = c.pipeline;
    read(s, "parallel", p.parallel, seen);
    read(s, "erase_branch", p.erase_branch, seen);
    read(s, "crop_branch", p.crop_branch, seen);
    read(s, "dual_enhance", p.dual_enhance, seen);
    reject_unknown(s, "pipeline", seen);
  }
  {
    const YAML::Node s = root["eval"];
    std::set<std::string> seen;
    auto& e = c.eval;
    std::string metric = metric_name(e.metric);
    read(s, "metric", metric, seen);
    e.metric = parse_metric(metric);
    read(s, "batch_size", e.batch_size, seen);
    read(s, "max_rank", e.max_rank, seen);
    read(s, "alphas", e.alphas, seen);
    read(s, "sweep_seed", e.sweep_seed, seen);
    read(s, "perturb_gallery", e.perturb_gallery, seen);
    reject_unknown(s, "eval", seen);
  }
  {
    const YAML::Node s = root["synthetic"];
    std::set<std::string> seen;
    auto& y = c.synthetic;
    read(s, "num_ids", y.num_ids, seen);
    read(s, "num_test_ids", y.num_test_ids, seen);
    read(s, "images_per_id", y.images_per_id, seen);
    read(s, "query_per_id", y.query_per_id, seen);
    read(s, "num_cams", y.num_cams, seen);
    read_size(s, "image_size", y.image_size, seen);
    std::vector<std::string> bank;
    for (auto o : y.occluder_bank) bank.push_back(o == OccluderShape::kEllipse ? "ellipse" : "rectangle");
    read(s, "occluder_bank", bank, seen);
    y.occluder_bank.clear();
    for (const auto& b : bank) {
      if (b == "rectangle") y.occluder_bank.push_back(OccluderShape::kRectangle);
      else if (b == "ellipse") y.occluder_bank.push_back(OccluderShape::kEllipse);
      else throw ConfigError("synthetic.occluder_bank: unknown shape '" + b + "'");
    }
    std::vector<double> occ{y.occlusion_prob.train, y.occlusion_prob.query, y.occlusion_prob.gallery};
    read(s, "occlusion_prob", occ, seen);
    if (occ.size() != 3) throw ConfigError("synthetic.occlusion_prob needs [train, query, gallery]");
    y.occlusion_prob = {occ[0], occ[1], occ[2]};
    read(s, "seed", y.seed, seen);
    reject_unknown(s, "synthetic", seen);
  }
  c.resolve();
  return c;
}

inline YAML::Node config_to_yaml(const RunConfig& c) {
  using namespace config_detail;
  YAML::Node root;
  const auto& a = c.augment;
  YAML::Node aug;
  aug["train_size"] = flow_of({a.train_size.height, a.train_size.width});
  aug["pad"] = a.pad;
  aug["erase_prob"] = num(a.erase_prob);
  aug["erase_area_range"] = flow({a.erase_area_range.lo, a.erase_area_range.hi});
  aug["erase_aspect_range"] = flow({a.erase_aspect_range.lo, a.erase_aspect_range.hi});
  aug["erase_fill"] = flow_floats(a.erase_fill);
  aug["crop_scale_range"] = flow({a.crop_scale_range.lo, a.crop_scale_range.hi});
  aug["crop_aspect_range"] = flow({a.crop_aspect_range.lo, a.crop_aspect_range.hi});
  aug["norm_mean"] = flow_floats(a.norm_mean);
  aug["norm_std"] = flow_floats(a.norm_std);
  aug["seed"] = a.seed;
  aug["max_attempts"] = a.max_attempts;
  aug["flip_prob"] = num(a.flip_prob);
  aug["serial_erase_prob"] = num(a.serial_erase_prob);
  root["augment"] = aug;

  const auto& b = c.backbone;
  YAML::Node bb;
  bb["patch_size"] = b.patch_size;
  bb["embed_dim"] = b.embed_dim;
  bb["depth"] = b.depth;
  bb["heads"] = b.heads;
  bb["mlp_ratio"] = b.mlp_ratio;
  bb["n_locals"] = b.n_locals;
  bb["final_norm"] = b.final_norm;
  root["backbone"] = bb;

  YAML::Node obj;
  obj["margin"] = num(c.objective.margin);
  obj["label_smoothing"] = num(c.objective.label_smoothing);
  root["objective"] = obj;

  const auto& t = c.trainer;
  YAML::Node tr;
  tr["lr"] = num(t.lr);
  YAML::Node decay(YAML::NodeType::Sequence);
  for (int e : t.lr_decay_epochs) decay.push_back(e);
  decay.SetStyle(YAML::EmitterStyle::Flow);
  tr["lr_decay_epochs"] = decay;
  tr["lr_decay_factor"] = num(t.lr_decay_factor);
  tr["warmup_epochs"] = t.warmup_epochs;
  tr["max_epoch"] = t.max_epoch;
  tr["batch_size"] = t.batch_size;
  tr["p"] = t.p;
  tr["k"] = t.k;
  tr["weight_decay"] = num(t.weight_decay);
  tr["momentum"] = num(t.momentum);
  tr["seed"] = t.seed;
  tr["steps_per_epoch"] = t.steps_per_epoch;
  tr["checkpoint_every"] = t.checkpoint_every;
  tr["eval_every"] = t.eval_every;
  root["trainer"] = tr;

  YAML::Node pl;
  pl["parallel"] = c.pipeline.parallel;
  pl["erase_branch"] = c.pipeline.erase_branch;
  pl["crop_branch"] = c.pipeline.crop_branch;
  pl["dual_enhance"] = c.pipeline.dual_enhance;
  root["pipeline"] = pl;

  const auto& e = c.eval;
  YAML::Node ev;
  ev["metric"] = metric_name(e.metric);
  ev["batch_size"] = e.batch_size;
  ev["max_rank"] = e.max_rank;
  ev["alphas"] = flow(e.alphas);
  ev["sweep_seed"] = e.sweep_seed;
  ev["perturb_gallery"] = e.perturb_gallery;
  root["eval"] = ev;

  const auto& y = c.synthetic;
  YAML::Node sy;
  sy["num_ids"] = y.num_ids;
  sy["num_test_ids"] = y.num_test_ids;
  sy["images_per_id"] = y.images_per_id;
  sy["query_per_id"] = y.query_per_id;
  sy["num_cams"] = y.num_cams;
  sy["image_size"] = flow_of({y.image_size.height, y.image_size.width});
  YAML::Node bank(YAML::NodeType::Sequence);
  for (auto o : y.occluder_bank) bank.push_back(o == OccluderShape::kEllipse ? "ellipse" : "rectangle");
  bank.SetStyle(YAML::EmitterStyle::Flow);
  sy["occluder_bank"] = bank;
  sy["occlusion_prob"] = flow({y.occlusion_prob.train, y.occlusion_prob.query, y.occlusion_prob.gallery});
  sy["seed"] = y.seed;
  root["synthetic"] = sy;
  return root;
}

inline std::string config_to_string(const RunConfig& c) {
  YAML::Emitter out;
  out << config_to_yaml(c);
  return std::string(out.c_str()) + "\n";
}

inline RunConfig config_from_string(const std::string& text) {
  try {
    return config_from_yaml(YAML::Load(text));
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
}

/// Applies "section.key=value" overrides (value parsed as YAML) to a tree.
inline void apply_override(YAML::Node& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
    throw ConfigError("override must look like section.key=value: " + assignment);
  }
  const std::string section = assignment.substr(0, dot);
  const std::string key = assignment.substr(dot + 1, eq - dot - 1);
  try {
    root[section][key] = YAML::Load(assignment.substr(eq + 1));
  } catch (const YAML::Exception& e) {
    throw ConfigError("cannot parse override " + assignment + ": " + e.what());
  }
}

/// Loads a YAML file, applies overrides, resolves and validates.
inline RunConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides = {}) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path.string());
  } catch (const YAML::BadFile&) {
    throw ConfigError("cannot open config file: " + path.string());
  } catch (const YAML::Exception& e) {
    throw ConfigError("config parse error in " + path.string() + ": " + e.what());
  }
  if (!root || root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
  for (const auto& o : overrides) apply_override(root, o);
  return config_from_yaml(root);
}

inline void save_config(const std::filesystem::path& path, const RunConfig& c) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config: " + path.string());
  out << config_to_string(c);
}

}  // namespace pade
