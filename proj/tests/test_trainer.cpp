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

// Learning-rate schedule, batch sampling, optimizer, training loop and checkpoints.

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>

#include "pade/checkpoint.hpp"
#include "pade/data.hpp"
#include "pade/error.hpp"
#include "pade/trainer.hpp"
#include "fixtures.hpp"

namespace {

using namespace pade;
namespace fs = std::filesystem;

TEST(LrSchedule, StepDecayAtConfiguredEpochs) {
  TrainConfig t;  // 0.008, decay x0.1 at 40 and 70, 170 epochs
  EXPECT_DOUBLE_EQ(lr_schedule(0, t), 0.008);
  EXPECT_DOUBLE_EQ(lr_schedule(39, t), 0.008);
  EXPECT_NEAR(lr_schedule(40, t), 0.0008, 1e-15);
  EXPECT_NEAR(lr_schedule(69, t), 0.0008, 1e-15);
  EXPECT_NEAR(lr_schedule(70, t), 0.00008, 1e-16);
  EXPECT_NEAR(lr_schedule(169, t), 0.00008, 1e-16);
  EXPECT_THROW(lr_schedule(170, t), ConfigError);
  EXPECT_THROW(lr_schedule(-1, t), ConfigError);
}

TEST(LrSchedule, LinearWarmupThenBase) {
  TrainConfig t;
  t.warmup_epochs = 4;
  EXPECT_DOUBLE_EQ(lr_schedule(0, t), 0.002);
  EXPECT_DOUBLE_EQ(lr_schedule(1, t), 0.004);
  EXPECT_DOUBLE_EQ(lr_schedule(3, t), 0.008);
  EXPECT_DOUBLE_EQ(lr_schedule(4, t), 0.008);
  t.warmup_epochs = 170;
  EXPECT_THROW(t.validate(), ConfigError);
}

TEST(TrainConfigValidation, RejectsInconsistentBatchAndDecay) {
  TrainConfig t;
  t.k = 3;
  EXPECT_THROW(t.validate(), ConfigError);
  t = TrainConfig{};
  t.lr_decay_epochs = {70, 40};
  EXPECT_THROW(t.validate(), ConfigError);
  t = TrainConfig{};
  t.lr_decay_epochs = {170};
  EXPECT_THROW(t.validate(), ConfigError);
}

ReIDDataset dataset_with_counts(const std::vector<int>& counts) {
  ReIDDataset ds;
  for (std::size_t id = 0; id < counts.size(); ++id)
    for (int i = 0; i < counts[id]; ++i) {
      Item it;
      it.id = it.raw_id = static_cast<int>(id);
      it.image = RawImage(4, 4, 3);
      ds.items.push_back(it);
    }
  return ds;
}

TEST(SampleBatch, PDistinctIdentitiesTimesK) {
  const ReIDDataset ds = dataset_with_counts(std::vector<int>(12, 6));
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const Batch b = sample_batch(ds, 8, 4, rng);
    ASSERT_EQ(b.indices.size(), 32u);
    std::map<int, int> per_label;
    for (int l : b.labels) ++per_label[l];
    EXPECT_EQ(per_label.size(), 8u);
    for (const auto& [l, n] : per_label) EXPECT_EQ(n, 4);
    std::map<int, std::set<std::size_t>> distinct;
    for (std::size_t j = 0; j < b.indices.size(); ++j) {
      EXPECT_EQ(ds.items[b.indices[j]].id, b.labels[j]);
      distinct[b.labels[j]].insert(b.indices[j]);
    }
    for (const auto& [l, s] : distinct) EXPECT_EQ(s.size(), 4u);  // no replacement when K images exist
  }
}

TEST(SampleBatch, SmallIdentitiesAreSampledWithReplacement) {
  const ReIDDataset ds = dataset_with_counts({1, 1, 2});
  Rng rng(5);
  const Batch b = sample_batch(ds, 3, 4, rng);
  ASSERT_EQ(b.indices.size(), 12u);
  std::map<int, int> per_label;
  for (int l : b.labels) ++per_label[l];
  for (const auto& [l, n] : per_label) EXPECT_EQ(n, 4);
  for (std::size_t j = 0; j < b.indices.size(); ++j) EXPECT_EQ(ds.items[b.indices[j]].id, b.labels[j]);
}

TEST(SampleBatch, SameRngStateSameBatchAndTooFewIdentitiesThrows) {
  const ReIDDataset ds = dataset_with_counts(std::vector<int>(10, 5));
  Rng a(11), b(11);
  EXPECT_EQ(sample_batch(ds, 4, 2, a).indices, sample_batch(ds, 4, 2, b).indices);
  Rng c(0);
  EXPECT_THROW(sample_batch(ds, 11, 2, c), DataError);
}

TEST(Sgd, ZeroLearningRateLeavesParametersUnchanged) {
  ParamList params{{"w", ag::parameter(Matrix::Constant(2, 3, 1.5))}};
  params[0].second.node()->grad = Matrix::Constant(2, 3, 4.0);
  Sgd opt(0.9, 0.0004);
  opt.step(params, 0.0);
  EXPECT_TRUE(params[0].second.value().isApprox(Matrix::Constant(2, 3, 1.5)));
}

TEST(Sgd, WeightDecayAloneShrinksByOneMinusLrTimesWd) {
  ParamList params{{"w", ag::parameter(Matrix::Constant(2, 2, 3.0))}};
  Sgd opt(0.9, 0.01);
  opt.step(params, 0.5);
  EXPECT_NEAR(params[0].second.value()(0, 0), 3.0 * (1.0 - 0.5 * 0.01), 1e-15);
}

TEST(Sgd, MomentumAccumulatesVelocity) {
  ParamList params{{"w", ag::parameter(Matrix::Zero(1, 1))}};
  Sgd opt(0.9, 0.0);
  params[0].second.node()->grad = Matrix::Constant(1, 1, 1.0);
  opt.step(params, 0.1);  // v = 1,    w = -0.1
  opt.step(params, 0.1);  // v = 1.9,  w = -0.29
  EXPECT_NEAR(params[0].second.value()(0, 0), -0.29, 1e-15);
  EXPECT_NEAR(opt.velocity().at("w")(0, 0), 1.9, 1e-15);
}

struct TinySetup {
  RunConfig cfg = fixture::tiny_run();
  DatasetSplits data = generate_synthetic(cfg.synthetic);
  Model model = Model::init(cfg.backbone, true, data.train.num_ids(), 0);
  BranchImages images;
  Batch batch;
  TinySetup() {
    Rng rng(1);
    batch = sample_batch(data.train, cfg.trainer.p, cfg.trainer.k, rng);
    images = augment_batch(data.train, batch, cfg, 0);
  }
};

TEST(TrainStep, EveryParameterReceivesAGradientAndOneUpdate) {
  TinySetup s;
  ParamList params = s.model.parameters();
  LossResult loss = compute_loss(s.model, s.images, s.batch.labels, s.cfg.objective);
  ag::backward(loss.total);
  for (const auto& [name, v] : params) {
    ASSERT_TRUE(v.has_grad()) << name;
    EXPECT_GT(v.grad().cwiseAbs().maxCoeff(), 0.0) << name;
  }
  Sgd opt(0.9, 0.0);
  EXPECT_EQ(opt.step(params, 0.01), params.size());
  EXPECT_EQ(opt.velocity().size(), params.size());
}

TEST(TrainStep, SmallStepDecreasesTheLoss) {
  TinySetup s;
  const double before = compute_loss(s.model, s.images, s.batch.labels, s.cfg.objective).report.total;
  Sgd opt(0.0, 0.0);
  train_step(s.model, opt, s.images, s.batch.labels, s.cfg.objective, 1e-3);
  const double after = compute_loss(s.model, s.images, s.batch.labels, s.cfg.objective).report.total;
  EXPECT_LT(after, before);
}

TEST(TrainStep, NonFiniteLossThrowsWithoutTouchingParameters) {
  TinySetup s;
  ParamList params = s.model.parameters();
  params[0].second.mutable_value()(0, 0) = std::numeric_limits<double>::quiet_NaN();
  const auto snapshot = snapshot_parameters(s.model);
  Sgd opt(0.9, 0.0004);
  EXPECT_THROW(train_step(s.model, opt, s.images, s.batch.labels, s.cfg.objective, 0.01), TrainingError);
  const auto after = snapshot_parameters(s.model);
  for (const auto& [name, v] : snapshot) {
    if (name == params[0].first) continue;
    EXPECT_TRUE(v == after.at(name)) << name;
  }
  EXPECT_TRUE(opt.velocity().empty());
}

void expect_same_parameters(const Model& a, const Model& b) {
  const auto pa = snapshot_parameters(a), pb = snapshot_parameters(b);
  ASSERT_EQ(pa.size(), pb.size());
  for (const auto& [name, v] : pa) EXPECT_TRUE(v == pb.at(name)) << name;
}

TEST(Fit, SameSeedIsBitIdentical) {
  const RunConfig cfg = fixture::tiny_run();
  const DatasetSplits data = generate_synthetic(cfg.synthetic);
  const FitResult a = fit(data.train, cfg);
  const FitResult b = fit(data.train, cfg);
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) EXPECT_EQ(a.log[i].loss.total, b.log[i].loss.total);
  expect_same_parameters(a.model, b.model);
  EXPECT_EQ(a.global_step, 8);
  EXPECT_EQ(a.log.back().lr, cfg.trainer.lr * 0.1);
}

TEST(Fit, ResumeReplaysTheUninterruptedRun) {
  const RunConfig cfg = fixture::tiny_run();
  const DatasetSplits data = generate_synthetic(cfg.synthetic);
  fixture::TempDir full_dir("trainer_full"), part_dir("trainer_part");
  FitOptions full_opts;
  full_opts.out_dir = full_dir.path();
  const FitResult full = fit(data.train, cfg, full_opts);

  FitOptions first;
  first.out_dir = part_dir.path();
  first.stop_after_epoch = 2;
  const FitResult head = fit(data.train, cfg, first);
  EXPECT_EQ(head.epochs_completed, 2);
  FitOptions second;
  second.out_dir = part_dir.path();
  second.resume_from = part_dir.path() / "last.ckpt";
  const FitResult tail = fit(data.train, cfg, second);

  ASSERT_EQ(head.log.size() + tail.log.size(), full.log.size());
  for (std::size_t i = 0; i < tail.log.size(); ++i) {
    const StepLog& expect = full.log[head.log.size() + i];
    EXPECT_EQ(tail.log[i].step, expect.step);
    EXPECT_EQ(tail.log[i].loss.total, expect.loss.total) << "step " << expect.step;
  }
  expect_same_parameters(full.model, tail.model);

  auto read = [](const fs::path& p) {
    std::ifstream in(p);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  EXPECT_EQ(read(full_dir.path() / "loss.csv"), read(part_dir.path() / "loss.csv"));
}

TEST(Checkpoint, RoundTripKeepsStateAndOptimizerMetadata) {
  const RunConfig cfg = fixture::tiny_run();
  const DatasetSplits data = generate_synthetic(cfg.synthetic);
  fixture::TempDir dir("trainer_ckpt");
  FitOptions opts;
  opts.out_dir = dir.path();
  opts.stop_after_epoch = 1;
  const FitResult r = fit(data.train, cfg, opts);
  const CheckpointState s = load_checkpoint(dir.path() / "last.ckpt");
  EXPECT_EQ(s.epoch, 1);
  EXPECT_EQ(s.global_step, 2);
  EXPECT_EQ(s.num_ids, 4);
  EXPECT_EQ(s.config.trainer.momentum, 0.9);
  EXPECT_EQ(config_to_string(s.config), config_to_string(cfg));
  EXPECT_EQ(s.velocity.size(), s.params.size());
  expect_same_parameters(model_from_checkpoint(s), r.model);
  EXPECT_TRUE(fs::exists(dir.path() / "config.yaml"));

  std::ifstream in(dir.path() / "last.ckpt", std::ios::binary);
  const std::string bytes(std::istreambuf_iterator<char>(in), {});
  EXPECT_NE(bytes.find("\"momentum\":0.9"), std::string::npos);
  EXPECT_EQ(git_blob_hash(dir.path() / "last.ckpt").size(), 40u);
}

TEST(Checkpoint, CorruptionAndTruncationAreDetected) {
  const RunConfig cfg = fixture::tiny_run();
  const DatasetSplits data = generate_synthetic(cfg.synthetic);
  fixture::TempDir dir("trainer_corrupt");
  FitOptions opts;
  opts.out_dir = dir.path();
  opts.stop_after_epoch = 1;
  fit(data.train, cfg, opts);
  const fs::path ckpt = dir.path() / "last.ckpt";
  std::string bytes;
  {
    std::ifstream in(ckpt, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  std::string flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x01;
  std::ofstream(dir.path() / "flipped.ckpt", std::ios::binary) << flipped;
  EXPECT_THROW(load_checkpoint(dir.path() / "flipped.ckpt"), IoError);
  std::ofstream(dir.path() / "short.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() / 3);
  EXPECT_THROW(load_checkpoint(dir.path() / "short.ckpt"), IoError);
  std::ofstream(dir.path() / "text.ckpt") << "hello";
  EXPECT_THROW(load_checkpoint(dir.path() / "text.ckpt"), IoError);
  EXPECT_THROW(load_checkpoint(dir.path() / "missing.ckpt"), IoError);
}

TEST(Checkpoint, MismatchedModelIsRejected) {
  const RunConfig cfg = fixture::tiny_run();
  const Model m = Model::init(cfg.backbone, true, 4, 0);
  auto params = snapshot_parameters(m);
  const Model wider = Model::init(cfg.backbone, true, 5, 0);
  EXPECT_THROW(assign_parameters(wider, params), ConfigError);
  params.erase(params.begin());
  EXPECT_THROW(assign_parameters(m, params), ConfigError);
}

}  // namespace
