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

#pragma once

#include <cstdint>
#include <string>

#include "pade/backbone.hpp"
#include "pade/enhance.hpp"
#include "pade/objective.hpp"
#include "pade/params.hpp"
#include "pade/rng.hpp"

namespace pade {

/// Shared backbone, dual-enhancement REMs and one classification head per stream.
struct Model {
  BackboneConfig config;
  bool dual_enhance = true;
  int num_ids = 0;
  BackboneParams backbone;
  DesParams des;
  Heads heads;

  static Model init(const BackboneConfig& cfg, bool dual_enhance, int num_ids, std::uint64_t seed) {
    cfg.validate();
    if (num_ids < 2) throw ConfigError("model: need at least two training identities");
    Model m;
    m.config = cfg;
    m.dual_enhance = dual_enhance;
    m.num_ids = num_ids;
    Rng rng(derive_seed(seed, "model-init"));
    m.backbone = BackboneParams::init(cfg, rng);
    m.des = DesParams::init(cfg.embed_dim, cfg.n_locals, rng);
    m.heads = Heads::init(cfg.embed_dim, cfg.n_locals, num_ids, rng);
    return m;
  }

  /// Every trainable tensor, in a fixed order.
  ParamList parameters() const {
    ParamList out;
    backbone.collect(out);
    des.collect(out);
    heads.collect(out);
    return out;
  }

  /// Width of the test-time descriptor: enhanced global plus n locals.
  int descriptor_dim() const { return (1 + config.n_locals) * config.embed_dim; }

  EnhancedBundle enhance(const FeatureBundle& bundle) const {
    return dual_enhance ? pade::dual_enhance(bundle, des) : passthrough(bundle);
  }
};

/// (1 + n) * d.
constexpr int descriptor_dim(int embed_dim, int n_locals) { return (1 + n_locals) * embed_dim; }

}  // namespace pade
