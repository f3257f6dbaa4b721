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

// Small configurations shared by the training, evaluation and CLI tests.

#ifndef PADE_TESTS_FIXTURES_HPP_
#define PADE_TESTS_FIXTURES_HPP_

#include <filesystem>
#include <string>

#include "pade/config.hpp"

namespace fixture {

/// 16x8 images, 4x4 patches, width 8: a full training step takes milliseconds.
inline pade::RunConfig tiny_run() {
  pade::RunConfig c;
  c.augment.train_size = {16, 8};
  c.augment.pad = 2;
  c.backbone.patch_size = 4;
  c.backbone.embed_dim = 8;
  c.backbone.depth = 1;
  c.backbone.heads = 2;
  c.backbone.mlp_ratio = 2;
  c.backbone.n_locals = 2;
  c.trainer.p = 2;
  c.trainer.k = 2;
  c.trainer.batch_size = 4;
  c.trainer.lr = 0.01;
  c.trainer.lr_decay_epochs = {2};
  c.trainer.max_epoch = 4;
  c.trainer.steps_per_epoch = 2;
  c.synthetic.num_ids = 4;
  c.synthetic.num_test_ids = 3;
  c.synthetic.images_per_id = 4;
  c.synthetic.query_per_id = 1;
  c.synthetic.image_size = {16, 8};
  c.eval.max_rank = 5;
  c.resolve();
  return c;
}

/// A fresh, empty directory removed when the object goes out of scope.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() / ("pade_test_" + tag);
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace fixture

#endif  // PADE_TESTS_FIXTURES_HPP_
