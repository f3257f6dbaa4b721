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

// Relation-based enhancement (REM) and the two-stage dual enhancement of the
// base-branch global feature and its stripe locals.

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "pade/autograd.hpp"
#include "pade/backbone.hpp"
#include "pade/error.hpp"
#include "pade/params.hpp"

namespace pade {

/// The three 1x1 projections of one REM: source -> gate key, target -> gate
/// query, source -> message. Each is (d x d) and right-multiplies row features.
struct RemParams {
  ag::Var w_source_gate;
  ag::Var w_target_gate;
  ag::Var w_source_msg;

  /// Gate projections start at Xavier scale. The message projection starts
  /// small, so a fresh unit is close to the plain residual target + source.
  static RemParams init(int d, Rng& rng) {
    return {ag::parameter(init::xavier_uniform(d, d, rng)),
            ag::parameter(init::xavier_uniform(d, d, rng)),
            ag::parameter(init::trunc_normal(d, d, 0.02, rng))};
  }

  void collect(ParamList& out, const std::string& prefix) const {
    out.emplace_back(prefix + "w_source_gate", w_source_gate);
    out.emplace_back(prefix + "w_target_gate", w_target_gate);
    out.emplace_back(prefix + "w_source_msg", w_source_msg);
  }
};

/// n local-enhancement REMs (one per stripe) and one global REM shared by
/// every step of the global fold.
struct DesParams {
  std::vector<RemParams> local_rems;
  RemParams global_rem;

  static DesParams init(int d, int n, Rng& rng) {
    DesParams p;
    for (int i = 0; i < n; ++i) p.local_rems.push_back(RemParams::init(d, rng));
    p.global_rem = RemParams::init(d, rng);
    return p;
  }

  void collect(ParamList& out, const std::string& prefix = "enhance.") const {
    for (std::size_t i = 0; i < local_rems.size(); ++i)
      local_rems[i].collect(out, prefix + "local." + std::to_string(i) + ".");
    global_rem.collect(out, prefix + "global.");
  }
};

/// gate = sigmoid(<source Ws, target Wt> / sqrt(d)), one scalar per row;
/// returns gate * (source Wm) + target + source. Inputs are (B x d).
inline ag::Var rem(const ag::Var& target, const ag::Var& source, const RemParams& p) {
  if (target.rows() != source.rows() || target.cols() != source.cols()) {
    throw ConfigError("rem: target and source dimensions differ");
  }
  const auto d = target.cols();
  if (p.w_source_gate.rows() != d || p.w_source_gate.cols() != d || p.w_target_gate.rows() != d ||
      p.w_target_gate.cols() != d || p.w_source_msg.rows() != d || p.w_source_msg.cols() != d) {
    throw ConfigError("rem: projection size does not match feature dimension " +
                      std::to_string(d));
  }
  const ag::Var key = ag::matmul(source, p.w_source_gate);
  const ag::Var query = ag::matmul(target, p.w_target_gate);
  const ag::Var gate =
      ag::sigmoid(ag::scale(ag::rowdot(key, query), 1.0 / std::sqrt(static_cast<double>(d))));
  const ag::Var message = ag::scale_rows(gate, ag::matmul(source, p.w_source_msg));
  return ag::add(ag::add(message, target), source);
}

/// local_i' = rem(local_i, g1) + local_i, each stripe with its own REM.
inline std::vector<ag::Var> enhance_locals(const ag::Var& g1, const std::vector<ag::Var>& locals,
                                           const DesParams& p) {
  if (locals.size() != p.local_rems.size()) {
    throw ConfigError("enhance_locals: expected " + std::to_string(p.local_rems.size()) +
                      " locals, got " + std::to_string(locals.size()));
  }
  std::vector<ag::Var> out;
  out.reserve(locals.size());
  for (std::size_t i = 0; i < locals.size(); ++i)
    out.push_back(ag::add(rem(locals[i], g1, p.local_rems[i]), locals[i]));
  return out;
}

/// Sequential fold: acc = rem(g1, l_1); acc = rem(acc, l_i) for i = 2..n.
inline ag::Var enhance_global(const ag::Var& g1, const std::vector<ag::Var>& enhanced_locals,
                              const DesParams& p) {
  if (enhanced_locals.empty()) throw ConfigError("enhance_global: no local features");
  ag::Var acc = g1;
  for (const auto& l : enhanced_locals) acc = rem(acc, l, p.global_rem);
  return acc;
}

struct EnhancedBundle {
  ag::Var g1_enhanced;
  std::vector<ag::Var> locals_enhanced;
  std::vector<FeatureBundle::Global> others;  // erased / cropped globals, untouched
};

inline EnhancedBundle dual_enhance(const FeatureBundle& bundle, const DesParams& p) {
  EnhancedBundle out;
  out.locals_enhanced = enhance_locals(bundle.g1(), bundle.locals, p);
  out.g1_enhanced = enhance_global(bundle.g1(), out.locals_enhanced, p);
  out.others.assign(bundle.globals.begin() + 1, bundle.globals.end());
  return out;
}

/// Ablation path with enhancement switched off: features pass through as-is.
inline EnhancedBundle passthrough(const FeatureBundle& bundle) {
  EnhancedBundle out;
  out.g1_enhanced = bundle.g1();
  out.locals_enhanced = bundle.locals;
  out.others.assign(bundle.globals.begin() + 1, bundle.globals.end());
  return out;
}

}  // namespace pade
