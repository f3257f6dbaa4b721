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

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "pade/autograd.hpp"
#include "pade/rng.hpp"

namespace pade {

using NamedParam = std::pair<std::string, ag::Var>;
using ParamList = std::vector<NamedParam>;

namespace init {

/// Glorot/Xavier uniform for an (in x out) weight.
inline Matrix xavier_uniform(Eigen::Index in, Eigen::Index out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  Matrix m(in, out);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
  return m;
}

/// Normal(0, std) truncated at two standard deviations.
inline Matrix trunc_normal(Eigen::Index rows, Eigen::Index cols, double std_dev, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    double v = rng.normal();
    while (std::abs(v) > 2.0) v = rng.normal();
    m.data()[i] = v * std_dev;
  }
  return m;
}

}  // namespace init

inline std::size_t parameter_count(const ParamList& params) {
  std::size_t n = 0;
  for (const auto& [name, v] : params) n += static_cast<std::size_t>(v.value().size());
  return n;
}

inline void zero_grad(ParamList& params) {
  for (auto& [name, v] : params) v.zero_grad();
}

}  // namespace pade
