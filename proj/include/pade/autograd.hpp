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

// Minimal reverse-mode automatic differentiation over dense row-major
// matrices. Every model component (backbone, enhancement, heads, losses) is
// expressed with the ops in this header so that a single backward pass
// produces gradients for all parameters.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "pade/error.hpp"

namespace pade {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

namespace ag {

struct Node {
  Matrix value;
  Matrix grad;  // empty until something is accumulated
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void accumulate(const Matrix& g) {
    if (grad.size() == 0) {
      grad = g;
    } else {
      grad += g;
    }
  }
};

namespace detail {
inline thread_local bool grad_enabled = true;
}

/// Disables graph recording in the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_enabled) { detail::grad_enabled = false; }
  ~NoGradGuard() { detail::grad_enabled = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

class Var {
 public:
  Var() = default;
  explicit Var(Matrix value, bool requires_grad = false)
      : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }

  double scalar() const { return node_->value(0, 0); }

  /// Gradient, or zeros of the value's shape when nothing was accumulated.
  Matrix grad() const {
    if (node_->grad.size() == 0) return Matrix::Zero(rows(), cols());
    return node_->grad;
  }
  bool has_grad() const { return node_->grad.size() != 0; }
  void zero_grad() { node_->grad.resize(0, 0); }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

inline Var constant(Matrix value) { return Var(std::move(value), false); }
inline Var parameter(Matrix value) { return Var(std::move(value), true); }

namespace detail {

inline Var make_result(Matrix value, std::vector<Var> inputs,
                       std::function<void(Node&)> fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool needs = false;
  if (grad_enabled) {
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (auto& in : inputs) node->parents.push_back(in.node());
    node->backward_fn = std::move(fn);
  }
  return Var(std::move(node));
}

inline void push_grad(Node& self, std::size_t parent, const Matrix& g) {
  auto& p = *self.parents[parent];
  if (p.requires_grad) p.accumulate(g);
}

inline bool wants(const Node& self, std::size_t parent) {
  return self.parents[parent]->requires_grad;
}

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ConfigError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                      std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                      std::to_string(b.cols()) + ")");
  }
}

}  // namespace detail

/// Runs reverse accumulation from a scalar root. Gradients accumulate into
/// every reachable node that requires them.
inline void backward(const Var& root) {
  if (root.rows() != 1 || root.cols() != 1) {
    throw ConfigError("backward: root must be a 1x1 scalar");
  }
  if (!root.requires_grad()) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn && node->grad.size() != 0) node->backward_fn(*node);
  }
}

// ---------------------------------------------------------------------------
// Elementwise and linear-algebra ops

inline Var add(const Var& a, const Var& b) {
  detail::require_same_shape(a.value(), b.value(), "add");
  return detail::make_result(a.value() + b.value(), {a, b}, [](Node& n) {
    detail::push_grad(n, 0, n.grad);
    detail::push_grad(n, 1, n.grad);
  });
}

inline Var sub(const Var& a, const Var& b) {
  detail::require_same_shape(a.value(), b.value(), "sub");
  return detail::make_result(a.value() - b.value(), {a, b}, [](Node& n) {
    detail::push_grad(n, 0, n.grad);
    if (detail::wants(n, 1)) detail::push_grad(n, 1, -n.grad);
  });
}

inline Var scale(const Var& a, double s) {
  return detail::make_result(a.value() * s, {a},
                             [s](Node& n) { detail::push_grad(n, 0, n.grad * s); });
}

inline Var mul(const Var& a, const Var& b) {
  detail::require_same_shape(a.value(), b.value(), "mul");
  return detail::make_result(a.value().cwiseProduct(b.value()), {a, b}, [](Node& n) {
    const Matrix& av = n.parents[0]->value;
    const Matrix& bv = n.parents[1]->value;
    if (detail::wants(n, 0)) detail::push_grad(n, 0, n.grad.cwiseProduct(bv));
    if (detail::wants(n, 1)) detail::push_grad(n, 1, n.grad.cwiseProduct(av));
  });
}

inline Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw ConfigError("matmul: inner dimensions differ (" + std::to_string(a.cols()) + " vs " +
                      std::to_string(b.rows()) + ")");
  }
  Matrix out = a.value() * b.value();
  return detail::make_result(std::move(out), {a, b}, [](Node& n) {
    const Matrix& av = n.parents[0]->value;
    const Matrix& bv = n.parents[1]->value;
    if (detail::wants(n, 0)) detail::push_grad(n, 0, n.grad * bv.transpose());
    if (detail::wants(n, 1)) detail::push_grad(n, 1, av.transpose() * n.grad);
  });
}

/// x (rows x d) + bias (1 x d) broadcast over rows.
inline Var add_row(const Var& x, const Var& bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols()) throw ConfigError("add_row: bias must be 1 x cols");
  Matrix out = x.value().rowwise() + bias.value().row(0);
  return detail::make_result(std::move(out), {x, bias}, [](Node& n) {
    detail::push_grad(n, 0, n.grad);
    if (detail::wants(n, 1)) detail::push_grad(n, 1, n.grad.colwise().sum());
  });
}

/// x W + b, with W stored as (in x out).
inline Var linear(const Var& x, const Var& weight, const Var& bias) {
  return add_row(matmul(x, weight), bias);
}

/// x is (blocks*T x d); pattern (T x d) is added to every block of T rows.
inline Var add_tiled(const Var& x, const Var& pattern) {
  const auto t = pattern.rows();
  if (pattern.cols() != x.cols() || t == 0 || x.rows() % t != 0) {
    throw ConfigError("add_tiled: pattern does not tile input");
  }
  Matrix out = x.value();
  const auto blocks = x.rows() / t;
  for (Eigen::Index b = 0; b < blocks; ++b) out.middleRows(b * t, t) += pattern.value();
  return detail::make_result(std::move(out), {x, pattern}, [t, blocks](Node& n) {
    detail::push_grad(n, 0, n.grad);
    if (detail::wants(n, 1)) {
      Matrix g = Matrix::Zero(t, n.grad.cols());
      for (Eigen::Index b = 0; b < blocks; ++b) g += n.grad.middleRows(b * t, t);
      detail::push_grad(n, 1, g);
    }
  });
}

inline Var sum(const Var& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return detail::make_result(std::move(out), {a}, [](Node& n) {
    const auto& p = *n.parents[0];
    detail::push_grad(n, 0, Matrix::Constant(p.value.rows(), p.value.cols(), n.grad(0, 0)));
  });
}

inline Var sigmoid(const Var& a) {
  Matrix out = a.value().unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  Matrix saved = out;
  return detail::make_result(std::move(out), {a}, [saved = std::move(saved)](Node& n) {
    detail::push_grad(n, 0,
                      n.grad.cwiseProduct(saved.unaryExpr([](double s) { return s * (1.0 - s); })));
  });
}

/// Exact (erf) GELU.
inline Var gelu(const Var& a) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  Matrix out = a.value().unaryExpr(
      [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); });
  return detail::make_result(std::move(out), {a}, [](Node& n) {
    constexpr double kInvSqrt2Pi = 0.39894228040143267794;
    const Matrix& x = n.parents[0]->value;
    Matrix d = x.unaryExpr([](double v) {
      return 0.5 * (1.0 + std::erf(v * kInvSqrt2)) + v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
    });
    detail::push_grad(n, 0, n.grad.cwiseProduct(d));
  });
}

// ---------------------------------------------------------------------------
// Row-wise helpers

/// Per-row inner product: (n x d), (n x d) -> (n x 1).
inline Var rowdot(const Var& a, const Var& b) {
  detail::require_same_shape(a.value(), b.value(), "rowdot");
  Matrix out = a.value().cwiseProduct(b.value()).rowwise().sum();
  return detail::make_result(std::move(out), {a, b}, [](Node& n) {
    const Matrix& av = n.parents[0]->value;
    const Matrix& bv = n.parents[1]->value;
    const auto g = n.grad.col(0);
    if (detail::wants(n, 0)) detail::push_grad(n, 0, bv.array().colwise() * g.array());
    if (detail::wants(n, 1)) detail::push_grad(n, 1, av.array().colwise() * g.array());
  });
}

/// Scales row i of x by s(i, 0).
inline Var scale_rows(const Var& s, const Var& x) {
  if (s.cols() != 1 || s.rows() != x.rows()) throw ConfigError("scale_rows: s must be rows x 1");
  Matrix out = x.value().array().colwise() * s.value().col(0).array();
  return detail::make_result(std::move(out), {s, x}, [](Node& n) {
    const Matrix& sv = n.parents[0]->value;
    const Matrix& xv = n.parents[1]->value;
    if (detail::wants(n, 0)) detail::push_grad(n, 0, n.grad.cwiseProduct(xv).rowwise().sum());
    if (detail::wants(n, 1)) detail::push_grad(n, 1, n.grad.array().colwise() * sv.col(0).array());
  });
}

/// Output row r is the mean of the input rows listed in groups[r].
inline Var pool_rows(const Var& x, std::vector<std::vector<Eigen::Index>> groups) {
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(groups.size()), x.cols());
  for (std::size_t r = 0; r < groups.size(); ++r) {
    if (groups[r].empty()) throw ConfigError("pool_rows: empty group");
    for (auto i : groups[r]) {
      if (i < 0 || i >= x.rows()) throw ConfigError("pool_rows: row index out of range");
      out.row(static_cast<Eigen::Index>(r)) += x.value().row(i);
    }
    out.row(static_cast<Eigen::Index>(r)) /= static_cast<double>(groups[r].size());
  }
  return detail::make_result(std::move(out), {x}, [groups = std::move(groups)](Node& n) {
    const auto& p = *n.parents[0];
    Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
    for (std::size_t r = 0; r < groups.size(); ++r) {
      const double w = 1.0 / static_cast<double>(groups[r].size());
      for (auto i : groups[r]) g.row(i) += w * n.grad.row(static_cast<Eigen::Index>(r));
    }
    detail::push_grad(n, 0, g);
  });
}

/// Places `token` (1 x d) ahead of each block of `per_block` rows of x.
/// Input (blocks*per_block x d), output (blocks*(per_block+1) x d).
inline Var prepend_token(const Var& x, const Var& token, Eigen::Index per_block) {
  if (token.rows() != 1 || token.cols() != x.cols() || per_block <= 0 ||
      x.rows() % per_block != 0) {
    throw ConfigError("prepend_token: shape mismatch");
  }
  const auto blocks = x.rows() / per_block;
  const auto stride = per_block + 1;
  Matrix out(blocks * stride, x.cols());
  for (Eigen::Index b = 0; b < blocks; ++b) {
    out.row(b * stride) = token.value().row(0);
    out.middleRows(b * stride + 1, per_block) = x.value().middleRows(b * per_block, per_block);
  }
  return detail::make_result(std::move(out), {x, token}, [blocks, per_block, stride](Node& n) {
    if (detail::wants(n, 0)) {
      Matrix g(blocks * per_block, n.grad.cols());
      for (Eigen::Index b = 0; b < blocks; ++b)
        g.middleRows(b * per_block, per_block) = n.grad.middleRows(b * stride + 1, per_block);
      detail::push_grad(n, 0, g);
    }
    if (detail::wants(n, 1)) {
      Matrix g = Matrix::Zero(1, n.grad.cols());
      for (Eigen::Index b = 0; b < blocks; ++b) g += n.grad.row(b * stride);
      detail::push_grad(n, 1, g);
    }
  });
}

// ---------------------------------------------------------------------------
// Normalization

/// Normalizes each row to zero mean / unit variance, then applies gamma, beta (1 x d).
inline Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-6) {
  const auto d = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != d || beta.rows() != 1 || beta.cols() != d) {
    throw ConfigError("layer_norm: affine parameters must be 1 x d");
  }
  const Matrix& xv = x.value();
  Matrix xhat(xv.rows(), d);
  Eigen::VectorXd rstd(xv.rows());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const double mu = xv.row(r).mean();
    const double var = (xv.row(r).array() - mu).square().mean();
    rstd(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (xv.row(r).array() - mu) * rstd(r);
  }
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() +
               beta.value().row(0).array();
  return detail::make_result(
      std::move(out), {x, gamma, beta},
      [xhat = std::move(xhat), rstd = std::move(rstd)](Node& n) {
        const Matrix& gv = n.parents[1]->value;
        if (detail::wants(n, 0)) {
          Matrix dxhat = n.grad.array().rowwise() * gv.row(0).array();
          Matrix dx(dxhat.rows(), dxhat.cols());
          for (Eigen::Index r = 0; r < dxhat.rows(); ++r) {
            const double m1 = dxhat.row(r).mean();
            const double m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).mean();
            dx.row(r) = rstd(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
          }
          detail::push_grad(n, 0, dx);
        }
        if (detail::wants(n, 1)) detail::push_grad(n, 1, n.grad.cwiseProduct(xhat).colwise().sum());
        if (detail::wants(n, 2)) detail::push_grad(n, 2, n.grad.colwise().sum());
      });
}

/// Training-mode batch normalization over rows (biased batch variance).
inline Var batch_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5) {
  const auto d = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != d || beta.rows() != 1 || beta.cols() != d) {
    throw ConfigError("batch_norm: affine parameters must be 1 x d");
  }
  const Matrix& xv = x.value();
  const RowVector mu = xv.colwise().mean();
  Matrix centered = xv.rowwise() - mu;
  const RowVector var = centered.array().square().colwise().mean();
  const RowVector rstd = (var.array() + eps).rsqrt();
  Matrix xhat = centered.array().rowwise() * rstd.array();
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() +
               beta.value().row(0).array();
  return detail::make_result(
      std::move(out), {x, gamma, beta}, [xhat = std::move(xhat), rstd](Node& n) {
        const Matrix& gv = n.parents[1]->value;
        if (detail::wants(n, 0)) {
          Matrix dxhat = n.grad.array().rowwise() * gv.row(0).array();
          const RowVector m1 = dxhat.colwise().mean();
          const RowVector m2 = dxhat.cwiseProduct(xhat).colwise().mean();
          Matrix dx = ((dxhat.rowwise() - m1).array() - xhat.array().rowwise() * m2.array())
                          .rowwise() *
                      rstd.array();
          detail::push_grad(n, 0, dx);
        }
        if (detail::wants(n, 1)) detail::push_grad(n, 1, n.grad.cwiseProduct(xhat).colwise().sum());
        if (detail::wants(n, 2)) detail::push_grad(n, 2, n.grad.colwise().sum());
      });
}

// ---------------------------------------------------------------------------
// Attention

/// Multi-head scaled dot-product self-attention over `blocks` independent
/// sequences of `tokens` rows. qkv is (blocks*tokens x 3d) laid out as
/// [Q | K | V]; returns (blocks*tokens x d) with heads concatenated.
inline Var self_attention(const Var& qkv, Eigen::Index blocks, Eigen::Index tokens,
                          Eigen::Index heads) {
  const auto d3 = qkv.cols();
  if (d3 % 3 != 0 || qkv.rows() != blocks * tokens) {
    throw ConfigError("self_attention: qkv must be (blocks*tokens x 3d)");
  }
  const auto d = d3 / 3;
  if (heads <= 0 || d % heads != 0) throw ConfigError("self_attention: d not divisible by heads");
  const auto dh = d / heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const Matrix& v = qkv.value();

  Matrix out(blocks * tokens, d);
  auto probs = std::make_shared<std::vector<Matrix>>(static_cast<std::size_t>(blocks * heads));
  for (Eigen::Index b = 0; b < blocks; ++b) {
    for (Eigen::Index h = 0; h < heads; ++h) {
      const auto q = v.block(b * tokens, h * dh, tokens, dh);
      const auto k = v.block(b * tokens, d + h * dh, tokens, dh);
      const auto val = v.block(b * tokens, 2 * d + h * dh, tokens, dh);
      Matrix s = (q * k.transpose()) * inv_scale;
      for (Eigen::Index r = 0; r < tokens; ++r) {
        const double m = s.row(r).maxCoeff();
        s.row(r) = (s.row(r).array() - m).exp();
        s.row(r) /= s.row(r).sum();
      }
      out.block(b * tokens, h * dh, tokens, dh).noalias() = s * val;
      (*probs)[static_cast<std::size_t>(b * heads + h)] = std::move(s);
    }
  }
  return detail::make_result(
      std::move(out), {qkv}, [probs, blocks, tokens, heads, d, dh, inv_scale](Node& n) {
        const Matrix& v = n.parents[0]->value;
        Matrix g = Matrix::Zero(v.rows(), v.cols());
        for (Eigen::Index b = 0; b < blocks; ++b) {
          for (Eigen::Index h = 0; h < heads; ++h) {
            const Matrix& a = (*probs)[static_cast<std::size_t>(b * heads + h)];
            const auto q = v.block(b * tokens, h * dh, tokens, dh);
            const auto k = v.block(b * tokens, d + h * dh, tokens, dh);
            const auto val = v.block(b * tokens, 2 * d + h * dh, tokens, dh);
            const auto go = n.grad.block(b * tokens, h * dh, tokens, dh);
            g.block(b * tokens, 2 * d + h * dh, tokens, dh).noalias() = a.transpose() * go;
            Matrix da = go * val.transpose();
            Eigen::VectorXd dots = da.cwiseProduct(a).rowwise().sum();
            Matrix ds = a.cwiseProduct(da.colwise() - dots) * inv_scale;
            g.block(b * tokens, h * dh, tokens, dh).noalias() = ds * k;
            g.block(b * tokens, d + h * dh, tokens, dh).noalias() = ds.transpose() * q;
          }
        }
        detail::push_grad(n, 0, g);
      });
}

}  // namespace ag
}  // namespace pade
