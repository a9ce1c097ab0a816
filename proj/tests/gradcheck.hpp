/**
 * Copyright 2026 The LGNet Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Central finite-difference oracle for tape gradients (test-only).
#pragma once

#include "lgnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace lgnet::testing {

inline Tensor<double> random_tensor(const Shape& s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor<double> t(s);
  for (Index i = 0; i < t.size(); ++i) t.data()[i] = dist(rng);
  return t;
}

/// ||a - b|| / max(||a||, ||b||, tiny)
inline double relative_error(const VecX<double>& a, const VecX<double>& b) {
  const double den = std::max({a.norm(), b.norm(), 1e-300});
  return (a - b).norm() / den;
}

/// Projects the graph output onto a fixed random direction and compares the
/// tape gradient of every input against central differences. Returns the
/// worst relative error over inputs.
inline double check_gradients(const std::function<Var<double>(const std::vector<Var<double>>&)>& fn,
                              std::vector<Tensor<double>> inputs, double step = 1e-6, std::uint64_t seed = 99) {
  std::vector<Var<double>> vars;
  for (auto& t : inputs) vars.push_back(leaf(t));
  auto out = fn(vars);
  std::mt19937_64 rng(seed);
  const Tensor<double> dir = random_tensor(out->value.shape(), rng);
  backward(out, &dir);
  auto project = [&](const std::vector<Tensor<double>>& xs) {
    std::vector<Var<double>> v;
    for (const auto& t : xs) v.push_back(constant(t));
    NoGradGuard guard;
    return fn(v)->value.data().dot(dir.data());
  };
  double worst = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    VecX<double> numeric(inputs[i].size());
    for (Index j = 0; j < inputs[i].size(); ++j) {
      auto plus = inputs;
      auto minus = inputs;
      plus[i].data()[j] += step;
      minus[i].data()[j] -= step;
      numeric[j] = (project(plus) - project(minus)) / (2 * step);
    }
    VecX<double> analytic = vars[i]->has_grad() ? vars[i]->grad.data() : VecX<double>::Zero(inputs[i].size());
    worst = std::max(worst, relative_error(analytic, numeric));
  }
  return worst;
}

}  // namespace lgnet::testing
