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

#pragma once

#include "lgnet/ops.hpp"

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace lgnet {

template <typename Scalar>
struct Parameter {
  std::string name;
  Var<Scalar> var;
};

/// Non-trainable state (batch-norm running statistics).
template <typename Scalar>
struct Buffer {
  std::string name;
  std::shared_ptr<Tensor<Scalar>> tensor;
};

/// Ordered registry of parameters and buffers keyed by hierarchical names
/// such as "enc1.local.conv.weight". Registration order is the
/// initialization order, so a fixed seed fixes every weight.
template <typename Scalar>
class ParameterSet {
 public:
  explicit ParameterSet(std::uint64_t seed = 0) : rng_(seed) {}

  Var<Scalar> add(const std::string& name, Tensor<Scalar> init) {
    for (const auto& p : params_)
      if (p.name == name) throw std::logic_error("duplicate parameter name " + name);
    auto var = leaf(std::move(init));
    params_.push_back({name, var});
    return var;
  }

  std::shared_ptr<Tensor<Scalar>> add_buffer(const std::string& name, Tensor<Scalar> init) {
    auto t = std::make_shared<Tensor<Scalar>>(std::move(init));
    buffers_.push_back({name, t});
    return t;
  }

  /// Uniform(-b, b) with b = sqrt(6 / fan_in) (He-uniform).
  Tensor<Scalar> he_uniform(const Shape& s, Index fan_in) {
    const double bound = std::sqrt(6.0 / static_cast<double>(std::max<Index>(fan_in, 1)));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor<Scalar> t(s);
    for (Index i = 0; i < t.size(); ++i) t.data()[i] = static_cast<Scalar>(dist(rng_));
    return t;
  }

  /// Uniform(-b, b) with b = 1 / sqrt(fan_in).
  Tensor<Scalar> lecun_uniform(const Shape& s, Index fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<Index>(fan_in, 1)));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor<Scalar> t(s);
    for (Index i = 0; i < t.size(); ++i) t.data()[i] = static_cast<Scalar>(dist(rng_));
    return t;
  }

  std::vector<Parameter<Scalar>>& params() { return params_; }
  const std::vector<Parameter<Scalar>>& params() const { return params_; }
  std::vector<Buffer<Scalar>>& buffers() { return buffers_; }
  const std::vector<Buffer<Scalar>>& buffers() const { return buffers_; }

  Index count() const {
    Index total = 0;
    for (const auto& p : params_) total += p.var->value.size();
    return total;
  }

  void zero_grad() {
    for (auto& p : params_) p.var->grad = Tensor<Scalar>();
  }

  Var<Scalar> find(const std::string& name) const {
    for (const auto& p : params_)
      if (p.name == name) return p.var;
    return nullptr;
  }

  void fill(Scalar v) {
    for (auto& p : params_) p.var->value.data().setConstant(v);
  }

 private:
  std::mt19937_64 rng_;
  std::vector<Parameter<Scalar>> params_;
  std::vector<Buffer<Scalar>> buffers_;
};

template <typename Scalar>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParameterSet<Scalar>& ps, const std::string& name, Index in, Index out, Index kernel, ConvSpec spec,
         bool with_bias)
      : spec_(spec) {
    const Index fan_in = (in / spec.groups) * kernel * kernel;
    weight_ = ps.add(name + ".weight", ps.he_uniform(Shape{out, in / spec.groups, kernel, kernel}, fan_in));
    if (with_bias) bias_ = ps.add(name + ".bias", Tensor<Scalar>(1, out, 1, 1));
  }

  Var<Scalar> operator()(const Var<Scalar>& x) const { return conv2d(x, weight_, bias_, spec_); }

  const Var<Scalar>& weight() const { return weight_; }
  const Var<Scalar>& bias() const { return bias_; }

 private:
  Var<Scalar> weight_;
  Var<Scalar> bias_;
  ConvSpec spec_{};
};

template <typename Scalar>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(ParameterSet<Scalar>& ps, const std::string& name, Index channels) {
    gamma_ = ps.add(name + ".weight", Tensor<Scalar>::constant(Shape{1, channels, 1, 1}, Scalar(1)));
    beta_ = ps.add(name + ".bias", Tensor<Scalar>(1, channels, 1, 1));
    mean_ = ps.add_buffer(name + ".running_mean", Tensor<Scalar>(1, channels, 1, 1));
    var_ = ps.add_buffer(name + ".running_var", Tensor<Scalar>::constant(Shape{1, channels, 1, 1}, Scalar(1)));
  }

  Var<Scalar> operator()(const Var<Scalar>& x, bool training) const {
    return batch_norm(x, gamma_, beta_, *mean_, *var_, training, Scalar(0.1), Scalar(1e-5));
  }

  const Var<Scalar>& gamma() const { return gamma_; }
  const Var<Scalar>& beta() const { return beta_; }

 private:
  Var<Scalar> gamma_;
  Var<Scalar> beta_;
  std::shared_ptr<Tensor<Scalar>> mean_;
  std::shared_ptr<Tensor<Scalar>> var_;
};

/// 3x3 conv (no bias), batch norm, ReLU.
template <typename Scalar>
class ConvBnRelu {
 public:
  ConvBnRelu() = default;
  ConvBnRelu(ParameterSet<Scalar>& ps, const std::string& name, Index in, Index out, Index dilation = 1)
      : conv_(ps, name + ".conv", in, out, 3, ConvSpec{1, dilation, dilation, 1}, false),
        bn_(ps, name + ".bn", out) {}

  Var<Scalar> operator()(const Var<Scalar>& x, bool training) const { return relu(bn_(conv_(x), training)); }

 private:
  Conv2d<Scalar> conv_;
  BatchNorm2d<Scalar> bn_;
};

}  // namespace lgnet
