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

// Patch-embedding transformer encoder shared by all augmentation branches.

#pragma once

#include <span>
#include <string>
#include <vector>

#include "pade/autograd.hpp"
#include "pade/error.hpp"
#include "pade/image.hpp"
#include "pade/params.hpp"
#include "pade/rng.hpp"

namespace pade {

struct BackboneConfig {
  int patch_size = 16;
  int embed_dim = 64;
  int depth = 2;
  int heads = 4;
  int mlp_ratio = 4;
  Size2 train_size{256, 128};
  int n_locals = 4;
  bool final_norm = true;

  int grid_rows() const { return train_size.height / patch_size; }
  int grid_cols() const { return train_size.width / patch_size; }
  int num_patches() const { return grid_rows() * grid_cols(); }
  int tokens() const { return num_patches() + 1; }
  int patch_dim() const { return 3 * patch_size * patch_size; }

  void validate() const {
    if (patch_size <= 0 || embed_dim <= 0 || depth < 0 || heads <= 0 || mlp_ratio <= 0) {
      throw ConfigError("backbone: sizes must be positive");
    }
    if (train_size.height <= 0 || train_size.width <= 0 ||
        train_size.height % patch_size != 0 || train_size.width % patch_size != 0) {
      throw ConfigError("backbone: train_size must be divisible by patch_size");
    }
    if (embed_dim % heads != 0) throw ConfigError("backbone: embed_dim must be divisible by heads");
    if (n_locals < 1 || grid_rows() % n_locals != 0) {
      throw ConfigError("backbone: n_locals must be >= 1 and divide the patch-row count (" +
                        std::to_string(grid_rows()) + ")");
    }
  }
};

struct EncoderBlockParams {
  ag::Var ln1_gamma, ln1_beta;
  ag::Var qkv_weight, qkv_bias;
  ag::Var proj_weight, proj_bias;
  ag::Var ln2_gamma, ln2_beta;
  ag::Var fc1_weight, fc1_bias;
  ag::Var fc2_weight, fc2_bias;
};

struct BackboneParams {
  ag::Var patch_weight, patch_bias;
  ag::Var cls_token;
  ag::Var pos_embed;
  std::vector<EncoderBlockParams> blocks;
  ag::Var norm_gamma, norm_beta;

  static BackboneParams init(const BackboneConfig& cfg, Rng& rng) {
    cfg.validate();
    const Eigen::Index d = cfg.embed_dim;
    const Eigen::Index hidden = d * cfg.mlp_ratio;
    BackboneParams p;
    p.patch_weight = ag::parameter(init::xavier_uniform(cfg.patch_dim(), d, rng));
    p.patch_bias = ag::parameter(Matrix::Zero(1, d));
    p.cls_token = ag::parameter(init::trunc_normal(1, d, 0.02, rng));
    p.pos_embed = ag::parameter(init::trunc_normal(cfg.tokens(), d, 0.02, rng));
    for (int i = 0; i < cfg.depth; ++i) {
      EncoderBlockParams b;
      b.ln1_gamma = ag::parameter(Matrix::Ones(1, d));
      b.ln1_beta = ag::parameter(Matrix::Zero(1, d));
      b.qkv_weight = ag::parameter(init::xavier_uniform(d, 3 * d, rng));
      b.qkv_bias = ag::parameter(Matrix::Zero(1, 3 * d));
      b.proj_weight = ag::parameter(init::xavier_uniform(d, d, rng));
      b.proj_bias = ag::parameter(Matrix::Zero(1, d));
      b.ln2_gamma = ag::parameter(Matrix::Ones(1, d));
      b.ln2_beta = ag::parameter(Matrix::Zero(1, d));
      b.fc1_weight = ag::parameter(init::xavier_uniform(d, hidden, rng));
      b.fc1_bias = ag::parameter(Matrix::Zero(1, hidden));
      b.fc2_weight = ag::parameter(init::xavier_uniform(hidden, d, rng));
      b.fc2_bias = ag::parameter(Matrix::Zero(1, d));
      p.blocks.push_back(std::move(b));
    }
    p.norm_gamma = ag::parameter(Matrix::Ones(1, d));
    p.norm_beta = ag::parameter(Matrix::Zero(1, d));
    return p;
  }

  void collect(ParamList& out, const std::string& prefix = "backbone.") const {
    out.emplace_back(prefix + "patch.weight", patch_weight);
    out.emplace_back(prefix + "patch.bias", patch_bias);
    out.emplace_back(prefix + "cls_token", cls_token);
    out.emplace_back(prefix + "pos_embed", pos_embed);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const auto& b = blocks[i];
      const std::string k = prefix + "blocks." + std::to_string(i) + ".";
      out.emplace_back(k + "ln1.gamma", b.ln1_gamma);
      out.emplace_back(k + "ln1.beta", b.ln1_beta);
      out.emplace_back(k + "qkv.weight", b.qkv_weight);
      out.emplace_back(k + "qkv.bias", b.qkv_bias);
      out.emplace_back(k + "proj.weight", b.proj_weight);
      out.emplace_back(k + "proj.bias", b.proj_bias);
      out.emplace_back(k + "ln2.gamma", b.ln2_gamma);
      out.emplace_back(k + "ln2.beta", b.ln2_beta);
      out.emplace_back(k + "fc1.weight", b.fc1_weight);
      out.emplace_back(k + "fc1.bias", b.fc1_bias);
      out.emplace_back(k + "fc2.weight", b.fc2_weight);
      out.emplace_back(k + "fc2.bias", b.fc2_bias);
    }
    out.emplace_back(prefix + "norm.gamma", norm_gamma);
    out.emplace_back(prefix + "norm.beta", norm_beta);
  }
};

struct EncoderOutput {
  ag::Var global;  // (B x d), class-token output
  ag::Var tokens;  // (B*P x d), patch-token outputs, sample-major then grid row-major
  Eigen::Index batch = 0;
};

/// Flattens each image into (P x 3*p*p) patch rows; patch order is grid
/// row-major, features ordered (channel, dy, dx).
inline Matrix patchify(std::span<const ImageTensor> images, const BackboneConfig& cfg) {
  const int p = cfg.patch_size;
  const int gr = cfg.grid_rows();
  const int gc = cfg.grid_cols();
  const Eigen::Index np = cfg.num_patches();
  Matrix out(static_cast<Eigen::Index>(images.size()) * np, cfg.patch_dim());
  for (std::size_t b = 0; b < images.size(); ++b) {
    const ImageTensor& img = images[b];
    if (img.channels != 3 || img.height != cfg.train_size.height ||
        img.width != cfg.train_size.width) {
      throw ConfigError("encode: image shape (" + std::to_string(img.channels) + "," +
                        std::to_string(img.height) + "," + std::to_string(img.width) +
                        ") does not match configured (3," +
                        std::to_string(cfg.train_size.height) + "," +
                        std::to_string(cfg.train_size.width) + ")");
    }
    for (int r = 0; r < gr; ++r) {
      for (int c = 0; c < gc; ++c) {
        const Eigen::Index row = static_cast<Eigen::Index>(b) * np + r * gc + c;
        Eigen::Index k = 0;
        for (int ch = 0; ch < 3; ++ch)
          for (int dy = 0; dy < p; ++dy)
            for (int dx = 0; dx < p; ++dx) out(row, k++) = img.at(ch, r * p + dy, c * p + dx);
      }
    }
  }
  return out;
}

/// Runs the encoder on a batch of images.
inline EncoderOutput encode(std::span<const ImageTensor> images, const BackboneParams& params,
                            const BackboneConfig& cfg) {
  if (images.empty()) throw ConfigError("encode: empty batch");
  if (static_cast<int>(params.blocks.size()) != cfg.depth ||
      params.pos_embed.rows() != cfg.tokens() || params.pos_embed.cols() != cfg.embed_dim) {
    throw ConfigError("encode: parameters do not match backbone config");
  }
  const Eigen::Index batch = static_cast<Eigen::Index>(images.size());
  const Eigen::Index np = cfg.num_patches();
  const Eigen::Index t = cfg.tokens();

  ag::Var x = ag::linear(ag::constant(patchify(images, cfg)), params.patch_weight,
                         params.patch_bias);
  x = ag::prepend_token(x, params.cls_token, np);
  x = ag::add_tiled(x, params.pos_embed);

  for (const auto& b : params.blocks) {
    ag::Var h = ag::layer_norm(x, b.ln1_gamma, b.ln1_beta);
    h = ag::linear(h, b.qkv_weight, b.qkv_bias);
    h = ag::self_attention(h, batch, t, cfg.heads);
    x = ag::add(x, ag::linear(h, b.proj_weight, b.proj_bias));
    h = ag::layer_norm(x, b.ln2_gamma, b.ln2_beta);
    h = ag::gelu(ag::linear(h, b.fc1_weight, b.fc1_bias));
    x = ag::add(x, ag::linear(h, b.fc2_weight, b.fc2_bias));
  }
  if (cfg.final_norm) x = ag::layer_norm(x, params.norm_gamma, params.norm_beta);

  std::vector<std::vector<Eigen::Index>> cls_rows, patch_rows;
  cls_rows.reserve(static_cast<std::size_t>(batch));
  patch_rows.reserve(static_cast<std::size_t>(batch * np));
  for (Eigen::Index b = 0; b < batch; ++b) {
    cls_rows.push_back({b * t});
    for (Eigen::Index i = 0; i < np; ++i) patch_rows.push_back({b * t + 1 + i});
  }
  return {ag::pool_rows(x, std::move(cls_rows)), ag::pool_rows(x, std::move(patch_rows)), batch};
}

/// Splits patch tokens into n horizontal stripes and mean-pools each one.
/// Returns n tensors of shape (B x d); stripe i covers grid rows
/// [i*R/n, (i+1)*R/n).
inline std::vector<ag::Var> split_locals(const ag::Var& tokens, Eigen::Index batch, int grid_rows,
                                         int grid_cols, int n) {
  if (n < 1 || grid_rows % n != 0) {
    throw ConfigError("split_locals: " + std::to_string(grid_rows) +
                      " patch rows are not divisible into " + std::to_string(n) + " stripes");
  }
  const Eigen::Index np = static_cast<Eigen::Index>(grid_rows) * grid_cols;
  if (tokens.rows() != batch * np) throw ConfigError("split_locals: token count mismatch");
  const int rows_per = grid_rows / n;
  std::vector<ag::Var> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    std::vector<std::vector<Eigen::Index>> groups(static_cast<std::size_t>(batch));
    for (Eigen::Index b = 0; b < batch; ++b) {
      auto& g = groups[static_cast<std::size_t>(b)];
      for (int r = i * rows_per; r < (i + 1) * rows_per; ++r)
        for (int c = 0; c < grid_cols; ++c) g.push_back(b * np + r * grid_cols + c);
    }
    out.push_back(ag::pool_rows(tokens, std::move(groups)));
  }
  return out;
}

enum class Branch { kBase, kErased, kCropped };

inline const char* branch_name(Branch b) {
  switch (b) {
    case Branch::kBase: return "base";
    case Branch::kErased: return "erased";
    case Branch::kCropped: return "cropped";
  }
  return "?";
}

/// Global features per branch plus stripe locals from the base branch.
struct FeatureBundle {
  struct Global {
    Branch branch;
    ag::Var feature;  // (B x d)
  };
  std::vector<Global> globals;  // base first
  std::vector<ag::Var> locals;  // n x (B x d), base branch only

  const ag::Var& g1() const { return globals.front().feature; }

  /// Global of the given branch; undefined Var when that branch was not run.
  ag::Var global(Branch b) const {
    for (const auto& g : globals)
      if (g.branch == b) return g.feature;
    return {};
  }
};

struct BranchInput {
  Branch branch;
  std::span<const ImageTensor> images;
};

/// Encodes every branch with the same parameters in a single pass. The first
/// branch must be the base branch; it alone contributes locals.
inline FeatureBundle forward_branches(std::span<const BranchInput> branches,
                                      const BackboneParams& params, const BackboneConfig& cfg) {
  if (branches.empty() || branches.front().branch != Branch::kBase) {
    throw ConfigError("forward: the first branch must be the base branch");
  }
  const std::size_t batch = branches.front().images.size();
  std::vector<ImageTensor> all;
  all.reserve(batch * branches.size());
  for (const auto& br : branches) {
    if (br.images.size() != batch) throw ConfigError("forward: branches are not aligned by sample");
    all.insert(all.end(), br.images.begin(), br.images.end());
  }
  const EncoderOutput enc = encode(all, params, cfg);
  const auto b = static_cast<Eigen::Index>(batch);

  FeatureBundle bundle;
  for (std::size_t k = 0; k < branches.size(); ++k) {
    std::vector<std::vector<Eigen::Index>> rows(batch);
    for (Eigen::Index i = 0; i < b; ++i) rows[static_cast<std::size_t>(i)] = {static_cast<Eigen::Index>(k) * b + i};
    bundle.globals.push_back({branches[k].branch, ag::pool_rows(enc.global, std::move(rows))});
  }
  std::vector<std::vector<Eigen::Index>> base_rows;
  const Eigen::Index np = cfg.num_patches();
  base_rows.reserve(static_cast<std::size_t>(b * np));
  for (Eigen::Index i = 0; i < b * np; ++i) base_rows.push_back({i});
  const ag::Var base_tokens =
      branches.size() == 1 ? enc.tokens : ag::pool_rows(enc.tokens, std::move(base_rows));
  bundle.locals = split_locals(base_tokens, b, cfg.grid_rows(), cfg.grid_cols(), cfg.n_locals);
  return bundle;
}

/// Base, erased and cropped batches through the shared encoder.
inline FeatureBundle forward_triplet(std::span<const ImageTensor> base,
                                     std::span<const ImageTensor> erased,
                                     std::span<const ImageTensor> cropped,
                                     const BackboneParams& params, const BackboneConfig& cfg) {
  const BranchInput inputs[] = {{Branch::kBase, base},
                                {Branch::kErased, erased},
                                {Branch::kCropped, cropped}};
  return forward_branches(inputs, params, cfg);
}

}  // namespace pade
