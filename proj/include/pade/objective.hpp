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

// Identity (cross-entropy) and batch-hard triplet losses over every feature
// stream: the enhanced base global, the erased/cropped globals and each
// enhanced local.

#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "pade/autograd.hpp"
#include "pade/enhance.hpp"
#include "pade/error.hpp"
#include "pade/params.hpp"

namespace pade {

using Labels = std::vector<int>;

namespace ag {

/// Mean softmax cross-entropy of (n x C) logits. With smoothing e the target
/// distribution is (1 - e) * onehot + e / C.
inline Var cross_entropy(const Var& logits, const Labels& labels, double smoothing = 0.0) {
  const auto n = logits.rows();
  const auto classes = logits.cols();
  if (static_cast<Eigen::Index>(labels.size()) != n) {
    throw ConfigError("cross_entropy: label count does not match batch");
  }
  for (int y : labels) {
    if (y < 0 || y >= classes) {
      throw DataError("cross_entropy: label " + std::to_string(y) + " outside [0, " +
                      std::to_string(classes) + ")");
    }
  }
  const Matrix& z = logits.value();
  Matrix prob(n, classes);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double m = z.row(i).maxCoeff();
    const double lse = m + std::log((z.row(i).array() - m).exp().sum());
    prob.row(i) = (z.row(i).array() - lse).exp();
    const double nll = lse - z(i, labels[static_cast<std::size_t>(i)]);
    const double mean_nll = lse - z.row(i).mean();
    loss += (1.0 - smoothing) * nll + smoothing * mean_nll;
  }
  Matrix out(1, 1);
  out(0, 0) = loss / static_cast<double>(n);
  return detail::make_result(std::move(out), {logits},
                             [prob = std::move(prob), labels, smoothing](Node& node) {
                               const auto rows = prob.rows();
                               const auto c = static_cast<double>(prob.cols());
                               Matrix g = prob.array() - smoothing / c;
                               for (Eigen::Index i = 0; i < rows; ++i)
                                 g(i, labels[static_cast<std::size_t>(i)]) -= 1.0 - smoothing;
                               g *= node.grad(0, 0) / static_cast<double>(rows);
                               detail::push_grad(node, 0, g);
                             });
}

/// Batch-hard triplet loss with Euclidean distances: per anchor the farthest
/// same-identity sample and the nearest other-identity sample;
/// mean of max(0, d_ap - d_an + margin).
inline Var batch_hard_triplet(const Var& features, const Labels& labels, double margin) {
  const auto n = features.rows();
  if (static_cast<Eigen::Index>(labels.size()) != n) {
    throw ConfigError("triplet: label count does not match batch");
  }
  std::map<int, int> counts;
  for (int y : labels) ++counts[y];
  if (counts.size() < 2) throw DataError("triplet: batch needs at least two identities");
  for (const auto& [id, c] : counts) {
    if (c < 2) {
      throw DataError("triplet: identity " + std::to_string(id) +
                      " has a single sample in the batch (P x K sampling requires K >= 2)");
    }
  }

  const Matrix& x = features.value();
  const Eigen::VectorXd sq = x.rowwise().squaredNorm();
  Matrix d2 = (-2.0 * (x * x.transpose())).colwise() + sq;
  d2.rowwise() += sq.transpose();
  Matrix dist = d2.cwiseMax(1e-12).cwiseSqrt();

  struct Pick {
    Eigen::Index pos, neg;
    bool active;
  };
  std::vector<Pick> picks(static_cast<std::size_t>(n));
  double loss = 0.0;
  for (Eigen::Index a = 0; a < n; ++a) {
    Eigen::Index pos = -1, neg = -1;
    double dp = -1.0, dn = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == a) continue;
      const bool same = labels[static_cast<std::size_t>(j)] == labels[static_cast<std::size_t>(a)];
      if (same && dist(a, j) > dp) {
        dp = dist(a, j);
        pos = j;
      } else if (!same && dist(a, j) < dn) {
        dn = dist(a, j);
        neg = j;
      }
    }
    const double hinge = dp - dn + margin;
    picks[static_cast<std::size_t>(a)] = {pos, neg, hinge > 0.0};
    if (hinge > 0.0) loss += hinge;
  }
  Matrix out(1, 1);
  out(0, 0) = loss / static_cast<double>(n);
  return detail::make_result(
      std::move(out), {features}, [picks = std::move(picks), dist = std::move(dist)](Node& node) {
        const Matrix& x = node.parents[0]->value;
        const auto rows = x.rows();
        Matrix g = Matrix::Zero(rows, x.cols());
        const double w = node.grad(0, 0) / static_cast<double>(rows);
        for (Eigen::Index a = 0; a < rows; ++a) {
          const Pick& p = picks[static_cast<std::size_t>(a)];
          if (!p.active) continue;
          const RowVector up = (x.row(a) - x.row(p.pos)) / dist(a, p.pos);
          const RowVector un = (x.row(a) - x.row(p.neg)) / dist(a, p.neg);
          g.row(a) += w * (up - un);
          g.row(p.pos) -= w * up;
          g.row(p.neg) += w * un;
        }
        detail::push_grad(node, 0, g);
      });
}

}  // namespace ag

/// Bottleneck (batch norm over the batch) followed by a bias-free linear
/// classifier (d x num_identities).
struct HeadParams {
  ag::Var bn_gamma;
  ag::Var bn_beta;
  ag::Var classifier;

  static HeadParams init(int d, int num_ids, Rng& rng) {
    Matrix w(d, num_ids);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = 0.001 * rng.normal();
    return {ag::parameter(Matrix::Ones(1, d)), ag::parameter(Matrix::Zero(1, d)),
            ag::parameter(std::move(w))};
  }

  void collect(ParamList& out, const std::string& prefix) const {
    out.emplace_back(prefix + "bn.gamma", bn_gamma);
    out.emplace_back(prefix + "bn.beta", bn_beta);
    out.emplace_back(prefix + "classifier", classifier);
  }
};

struct ObjectiveConfig {
  double margin = 0.3;
  double label_smoothing = 0.0;

  void validate() const {
    if (!(margin >= 0.0)) throw ConfigError("objective.margin must be >= 0");
    if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) {
      throw ConfigError("objective.label_smoothing must lie in [0, 1)");
    }
  }
};

inline ag::Var id_loss(const ag::Var& feature, const Labels& labels, const HeadParams& head,
                       double smoothing = 0.0) {
  const ag::Var logits =
      ag::matmul(ag::batch_norm(feature, head.bn_gamma, head.bn_beta), head.classifier);
  return ag::cross_entropy(logits, labels, smoothing);
}

inline ag::Var triplet_loss(const ag::Var& features, const Labels& labels, double margin) {
  return ag::batch_hard_triplet(features, labels, margin);
}

/// Stream names in loss order: "g1", "g2", "g3", "l1".."ln".
inline std::string stream_name(Branch b) {
  switch (b) {
    case Branch::kBase: return "g1";
    case Branch::kErased: return "g2";
    case Branch::kCropped: return "g3";
  }
  return "?";
}

/// One head per stream: g1, g2, g3, then one per local.
struct Heads {
  std::map<std::string, HeadParams> by_stream;

  static Heads init(int d, int n_locals, int num_ids, Rng& rng) {
    Heads h;
    for (const char* g : {"g1", "g2", "g3"}) h.by_stream.emplace(g, HeadParams::init(d, num_ids, rng));
    for (int i = 1; i <= n_locals; ++i)
      h.by_stream.emplace("l" + std::to_string(i), HeadParams::init(d, num_ids, rng));
    return h;
  }

  const HeadParams& at(const std::string& stream) const {
    auto it = by_stream.find(stream);
    if (it == by_stream.end()) throw ConfigError("no classification head for stream " + stream);
    return it->second;
  }

  void collect(ParamList& out, const std::string& prefix = "heads.") const {
    for (const auto& [name, h] : by_stream) h.collect(out, prefix + name + ".");
  }
};

struct TermLoss {
  std::string stream;
  double ce = 0.0;
  double triplet = 0.0;
};

struct LossReport {
  double l_cls = 0.0;
  double l_metric = 0.0;
  double total = 0.0;
  std::vector<TermLoss> per_term;

  bool finite() const {
    if (!std::isfinite(total)) return false;
    for (const auto& t : per_term)
      if (!std::isfinite(t.ce) || !std::isfinite(t.triplet)) return false;
    return true;
  }

  std::string describe() const {
    std::string s = "total=" + std::to_string(total) + " l_cls=" + std::to_string(l_cls) +
                    " l_metric=" + std::to_string(l_metric);
    for (const auto& t : per_term)
      s += " " + t.stream + "(ce=" + std::to_string(t.ce) + ",tri=" + std::to_string(t.triplet) + ")";
    return s;
  }
};

struct LossResult {
  ag::Var total;  // differentiable l_cls + l_metric
  LossReport report;
};

/// Per-stream multipliers; streams not listed weigh 1.
struct StreamWeights {
  std::map<std::string, double> ce;
  std::map<std::string, double> triplet;

  static double get(const std::map<std::string, double>& m, const std::string& k) {
    auto it = m.find(k);
    return it == m.end() ? 1.0 : it->second;
  }
};

/// Named feature streams of an enhanced bundle in loss order.
inline std::vector<std::pair<std::string, ag::Var>> loss_streams(const EnhancedBundle& e) {
  std::vector<std::pair<std::string, ag::Var>> s;
  s.emplace_back("g1", e.g1_enhanced);
  for (const auto& g : e.others) s.emplace_back(stream_name(g.branch), g.feature);
  for (std::size_t i = 0; i < e.locals_enhanced.size(); ++i)
    s.emplace_back("l" + std::to_string(i + 1), e.locals_enhanced[i]);
  return s;
}

/// L = sum over streams of CE(head(stream)) + sum over streams of triplet(stream).
inline LossResult total_loss(const EnhancedBundle& enhanced, const Labels& labels,
                             const Heads& heads, const ObjectiveConfig& cfg,
                             const StreamWeights& weights = {}) {
  LossResult r;
  ag::Var cls_sum, metric_sum;
  for (const auto& [name, feature] : loss_streams(enhanced)) {
    if (!feature.defined()) throw ConfigError("total_loss: stream " + name + " missing");
    const ag::Var ce =
        ag::scale(id_loss(feature, labels, heads.at(name), cfg.label_smoothing),
                  StreamWeights::get(weights.ce, name));
    const ag::Var tri =
        ag::scale(triplet_loss(feature, labels, cfg.margin), StreamWeights::get(weights.triplet, name));
    r.report.per_term.push_back({name, ce.scalar(), tri.scalar()});
    cls_sum = cls_sum.defined() ? ag::add(cls_sum, ce) : ce;
    metric_sum = metric_sum.defined() ? ag::add(metric_sum, tri) : tri;
  }
  r.total = ag::add(cls_sum, metric_sum);
  r.report.l_cls = cls_sum.scalar();
  r.report.l_metric = metric_sum.scalar();
  r.report.total = r.total.scalar();
  return r;
}

}  // namespace pade
