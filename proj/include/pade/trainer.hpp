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

// SGD training loop: P x K identity sampling, per-sample augmentation,
// shared-parameter multi-branch forward, stepped learning rate, checkpoints
// and a per-step CSV loss log.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pade/augment.hpp"
#include "pade/checkpoint.hpp"
#include "pade/config.hpp"
#include "pade/data.hpp"
#include "pade/error.hpp"
#include "pade/eval.hpp"
#include "pade/model.hpp"
#include "pade/objective.hpp"
#include "pade/rng.hpp"

namespace pade {

/// base * factor^(number of decay epochs <= epoch), times the linear warmup
/// ramp (e + 1) / W during the first W epochs.
inline double lr_schedule(int epoch, const TrainConfig& cfg) {
  if (epoch < 0 || epoch >= cfg.max_epoch) {
    throw ConfigError("lr_schedule: epoch " + std::to_string(epoch) + " outside [0, " +
                      std::to_string(cfg.max_epoch) + ")");
  }
  const auto passed = std::count_if(cfg.lr_decay_epochs.begin(), cfg.lr_decay_epochs.end(),
                                    [epoch](int e) { return e <= epoch; });
  const double warmup =
      epoch < cfg.warmup_epochs ? static_cast<double>(epoch + 1) / cfg.warmup_epochs : 1.0;
  return warmup * cfg.lr * std::pow(cfg.lr_decay_factor, static_cast<double>(passed));
}

/// SGD with momentum and coupled weight decay:
/// v <- momentum * v + (g + wd * w);  w <- w - lr * v.
class Sgd {
 public:
  Sgd(double momentum, double weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}

  /// Updates every parameter once; parameters without a gradient see only decay.
  std::size_t step(const ParamList& params, double lr) {
    std::size_t touched = 0;
    for (auto [name, var] : params) {
      Matrix& w = var.mutable_value();
      Matrix d = var.has_grad() ? Matrix(var.node()->grad) : Matrix::Zero(w.rows(), w.cols());
      if (weight_decay_ != 0.0) d += weight_decay_ * w;
      auto it = velocity_.find(name);
      if (it == velocity_.end()) {
        it = velocity_.emplace(name, std::move(d)).first;
      } else {
        it->second = momentum_ * it->second + d;
      }
      w -= lr * it->second;
      ++touched;
    }
    return touched;
  }

  const std::map<std::string, Matrix>& velocity() const { return velocity_; }
  void set_velocity(std::map<std::string, Matrix> v) { velocity_ = std::move(v); }
  double momentum() const { return momentum_; }
  double weight_decay() const { return weight_decay_; }

 private:
  double momentum_;
  double weight_decay_;
  std::map<std::string, Matrix> velocity_;
};

struct Batch {
  std::vector<std::size_t> indices;  // into the dataset, P*K entries
  Labels labels;
};

/// P distinct identities, K instances each. Identities with fewer than K
/// images are sampled with replacement.
inline Batch sample_batch(const ReIDDataset& ds, int p, int k, Rng& rng) {
  const auto groups = ds.by_identity();
  if (static_cast<int>(groups.size()) < p) {
    throw DataError("sample_batch: dataset has " + std::to_string(groups.size()) +
                    " identities, batch needs " + std::to_string(p));
  }
  std::vector<int> ids;
  for (const auto& [id, idx] : groups) ids.push_back(id);
  for (int i = 0; i < p; ++i) {
    const auto j = rng.uniform_int(i, static_cast<long long>(ids.size()) - 1);
    std::swap(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(j)]);
  }
  Batch b;
  for (int i = 0; i < p; ++i) {
    const int id = ids[static_cast<std::size_t>(i)];
    std::vector<std::size_t> pool = groups.at(id);
    if (static_cast<int>(pool.size()) >= k) {
      for (int s = 0; s < k; ++s) {
        const auto j = rng.uniform_int(s, static_cast<long long>(pool.size()) - 1);
        std::swap(pool[static_cast<std::size_t>(s)], pool[static_cast<std::size_t>(j)]);
        b.indices.push_back(pool[static_cast<std::size_t>(s)]);
        b.labels.push_back(id);
      }
    } else {
      for (int s = 0; s < k; ++s) {
        b.indices.push_back(pool[static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<long long>(pool.size()) - 1))]);
        b.labels.push_back(id);
      }
    }
  }
  return b;
}

/// Augmented inputs for one batch, aligned by sample across branches.
struct BranchImages {
  std::vector<ImageTensor> base, erased, cropped;
};

/// Slot j of the batch at global step s uses seed derive_seed(seed, "aug", s * B + j).
inline std::uint64_t augmentation_seed(std::uint64_t trainer_seed, long long step, int batch_size,
                                       std::size_t slot) {
  return derive_seed(trainer_seed, "aug",
                     static_cast<std::uint64_t>(step) * static_cast<std::uint64_t>(batch_size) + slot);
}

inline BranchImages augment_batch(const ReIDDataset& ds, const Batch& batch, const RunConfig& cfg,
                                  long long step) {
  BranchImages out;
  for (std::size_t j = 0; j < batch.indices.size(); ++j) {
    const RawImage& src = ds.items[batch.indices[j]].image;
    const std::uint64_t seed = augmentation_seed(cfg.trainer.seed, step, cfg.trainer.batch_size, j);
    if (!cfg.pipeline.parallel) {
      out.base.push_back(serial_augment(src, cfg.augment, seed));
      continue;
    }
    ImageTriplet t = parallel_augment(src, cfg.augment, seed);
    out.base.push_back(std::move(t.base));
    if (cfg.pipeline.erase_branch) out.erased.push_back(std::move(t.erased));
    if (cfg.pipeline.crop_branch) out.cropped.push_back(std::move(t.cropped));
  }
  return out;
}

/// Forward + loss for one batch, without touching parameters.
inline LossResult compute_loss(const Model& model, const BranchImages& images, const Labels& labels,
                               const ObjectiveConfig& objective) {
  std::vector<BranchInput> inputs{{Branch::kBase, images.base}};
  if (!images.erased.empty()) inputs.push_back({Branch::kErased, images.erased});
  if (!images.cropped.empty()) inputs.push_back({Branch::kCropped, images.cropped});
  const FeatureBundle bundle = forward_branches(inputs, model.backbone, model.config);
  return total_loss(model.enhance(bundle), labels, model.heads, objective);
}

/// One optimizer step over the total loss. A non-finite loss aborts before any
/// parameter changes.
inline LossReport train_step(Model& model, Sgd& opt, const BranchImages& images,
                             const Labels& labels, const ObjectiveConfig& objective, double lr) {
  ParamList params = model.parameters();
  zero_grad(params);
  LossResult loss = compute_loss(model, images, labels, objective);
  if (!loss.report.finite()) {
    throw TrainingError("non-finite loss: " + loss.report.describe());
  }
  ag::backward(loss.total);
  opt.step(params, lr);
  zero_grad(params);
  return loss.report;
}

struct StepLog {
  long long step = 0;
  int epoch = 0;
  double lr = 0.0;
  LossReport loss;
};

struct FitOptions {
  std::filesystem::path out_dir;  // empty: no files written
  std::optional<std::filesystem::path> resume_from;
  int stop_after_epoch = -1;  // when >= 0, stop once this many epochs are complete
  const ReIDDataset* val_query = nullptr;
  const ReIDDataset* val_gallery = nullptr;
  std::function<void(const StepLog&)> on_step;
  std::function<void(int epoch, const std::vector<StepLog>&)> on_epoch;
};

struct FitResult {
  Model model;
  std::vector<StepLog> log;  // steps run in this call
  int epochs_completed = 0;
  long long global_step = 0;
  double best_map = -1.0;
  std::filesystem::path last_checkpoint;
};

inline int steps_per_epoch(const TrainConfig& cfg, std::size_t train_size) {
  if (cfg.steps_per_epoch > 0) return cfg.steps_per_epoch;
  return std::max(1, static_cast<int>(train_size / static_cast<std::size_t>(cfg.batch_size)));
}

namespace trainer_detail {

inline std::string csv_header(const LossReport& r) {
  std::string h = "step,epoch,lr,l_cls,l_metric,total";
  for (const auto& t : r.per_term) h += ",ce_" + t.stream + ",tri_" + t.stream;
  return h;
}

inline std::string csv_row(const StepLog& s) {
  std::ostringstream o;
  o.precision(10);
  o << s.step << ',' << s.epoch << ',' << s.lr << ',' << s.loss.l_cls << ',' << s.loss.l_metric
    << ',' << s.loss.total;
  for (const auto& t : s.loss.per_term) o << ',' << t.ce << ',' << t.triplet;
  return o.str();
}

/// Keeps the header and rows with step < keep_below.
inline void truncate_log(const std::filesystem::path& path, long long keep_below) {
  std::ifstream in(path);
  if (!in) return;
  std::vector<std::string> lines;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      lines.push_back(line);
      header = false;
      continue;
    }
    if (std::stoll(line.substr(0, line.find(','))) < keep_below) lines.push_back(line);
  }
  in.close();
  std::ofstream out(path, std::ios::trunc);
  for (const auto& l : lines) out << l << '\n';
}

}  // namespace trainer_detail

inline CheckpointState capture_state(const Model& model, const Sgd& opt, const RunConfig& cfg,
                                     int epoch, long long step) {
  CheckpointState s;
  s.config = cfg;
  s.num_ids = model.num_ids;
  s.epoch = epoch;
  s.global_step = step;
  s.params = snapshot_parameters(model);
  s.velocity = opt.velocity();
  return s;
}

/// Full training loop. Epoch e draws its batches from
/// Rng(derive_seed(seed, "epoch", e)), so resuming from an epoch boundary
/// replays the uninterrupted run exactly.
inline FitResult fit(const ReIDDataset& train, const RunConfig& cfg, const FitOptions& opts = {}) {
  namespace fs = std::filesystem;
  if (train.items.empty()) throw DataError("fit: training split is empty");
  const int num_ids = train.num_ids();

  FitResult result;
  result.model = Model::init(cfg.backbone, cfg.pipeline.dual_enhance, num_ids, cfg.trainer.seed);
  Sgd opt(cfg.trainer.momentum, cfg.trainer.weight_decay);
  int start_epoch = 0;
  long long step = 0;
  if (opts.resume_from) {
    CheckpointState s = load_checkpoint(*opts.resume_from);
    if (s.num_ids != num_ids) throw ConfigError("resume: checkpoint identity count differs from dataset");
    assign_parameters(result.model, s.params);
    opt.set_velocity(std::move(s.velocity));
    start_epoch = s.epoch;
    step = s.global_step;
  }

  const bool write = !opts.out_dir.empty();
  const fs::path log_path = opts.out_dir / "loss.csv";
  std::ofstream log;
  if (write) {
    fs::create_directories(opts.out_dir);
    save_config(opts.out_dir / "config.yaml", cfg);
    if (opts.resume_from && fs::exists(log_path)) {
      trainer_detail::truncate_log(log_path, step);
      log.open(log_path, std::ios::app);
    } else {
      log.open(log_path, std::ios::trunc);
    }
    if (!log) throw IoError("cannot open " + log_path.string());
  }
  bool header_written = opts.resume_from.has_value() && write && fs::file_size(log_path) > 0;

  const int steps = steps_per_epoch(cfg.trainer, train.items.size());
  const int end_epoch = opts.stop_after_epoch >= 0 ? std::min(opts.stop_after_epoch, cfg.trainer.max_epoch)
                                                   : cfg.trainer.max_epoch;
  result.epochs_completed = start_epoch;
  for (int epoch = start_epoch; epoch < end_epoch; ++epoch) {
    const double lr = lr_schedule(epoch, cfg.trainer);
    Rng rng(derive_seed(cfg.trainer.seed, "epoch", static_cast<std::uint64_t>(epoch)));
    std::vector<StepLog> epoch_log;
    for (int s = 0; s < steps; ++s, ++step) {
      const Batch batch = sample_batch(train, cfg.trainer.p, cfg.trainer.k, rng);
      const BranchImages images = augment_batch(train, batch, cfg, step);
      StepLog entry{step, epoch, lr, train_step(result.model, opt, images, batch.labels, cfg.objective, lr)};
      if (write) {
        if (!header_written) {
          log << trainer_detail::csv_header(entry.loss) << '\n';
          header_written = true;
        }
        log << trainer_detail::csv_row(entry) << '\n';
      }
      if (opts.on_step) opts.on_step(entry);
      epoch_log.push_back(entry);
      result.log.push_back(std::move(entry));
    }
    if (write) log.flush();
    result.epochs_completed = epoch + 1;
    const bool last = epoch + 1 == end_epoch;

    if (write && ((epoch + 1) % cfg.trainer.checkpoint_every == 0 || last)) {
      result.last_checkpoint = opts.out_dir / "last.ckpt";
      save_checkpoint(result.last_checkpoint, capture_state(result.model, opt, cfg, epoch + 1, step));
    }
    if (cfg.trainer.eval_every > 0 && opts.val_query && opts.val_gallery &&
        ((epoch + 1) % cfg.trainer.eval_every == 0 || last)) {
      const double m = evaluate_model(result.model, *opts.val_query, *opts.val_gallery, cfg).map;
      if (m > result.best_map) {
        result.best_map = m;
        if (write) {
          auto st = capture_state(result.model, opt, cfg, epoch + 1, step);
          st.extra["val_map"] = m;
          save_checkpoint(opts.out_dir / "best.ckpt", st);
        }
      }
    }
    if (opts.on_epoch) opts.on_epoch(epoch, epoch_log);
  }
  result.global_step = step;
  return result;
}

}  // namespace pade
