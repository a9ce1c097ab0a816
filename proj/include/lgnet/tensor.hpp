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

#include <Eigen/Dense>

#include <array>
#include <sstream>
#include <stdexcept>
#include <string>

namespace lgnet {

using Index = Eigen::Index;

template <typename Scalar>
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using RowMatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// NCHW extent of a dense tensor.
struct Shape {
  Index n = 0;
  Index c = 0;
  Index h = 0;
  Index w = 0;

  Index plane() const { return h * w; }
  Index sample() const { return c * h * w; }
  Index numel() const { return n * c * h * w; }

  friend bool operator==(const Shape&, const Shape&) = default;

  std::string str() const {
    std::ostringstream os;
    os << "[" << n << ", " << c << ", " << h << ", " << w << "]";
    return os.str();
  }
};

/// Dense NCHW tensor backed by an Eigen column vector.
///
/// Each sample is laid out channel-major, so `sample(i)` can be viewed as a
/// row-major [C, H*W] matrix; convolutions are expressed as products on that
/// view.
template <typename Scalar_>
class Tensor {
 public:
  using Scalar = Scalar_;
  using Vector = VecX<Scalar>;
  using SampleMap = Eigen::Map<RowMatX<Scalar>>;
  using ConstSampleMap = Eigen::Map<const RowMatX<Scalar>>;
  using PlaneMap = Eigen::Map<RowMatX<Scalar>>;
  using ConstPlaneMap = Eigen::Map<const RowMatX<Scalar>>;

  Tensor() = default;
  explicit Tensor(const Shape& s) : shape_(s), data_(Vector::Zero(s.numel())) {}
  Tensor(Index n, Index c, Index h, Index w) : Tensor(Shape{n, c, h, w}) {}
  Tensor(const Shape& s, Vector data) : shape_(s), data_(std::move(data)) {
    if (data_.size() != s.numel()) throw std::invalid_argument("tensor: data size does not match shape " + s.str());
  }

  static Tensor constant(const Shape& s, Scalar v) { return Tensor(s, Vector::Constant(s.numel(), v)); }

  const Shape& shape() const { return shape_; }
  Index n() const { return shape_.n; }
  Index c() const { return shape_.c; }
  Index h() const { return shape_.h; }
  Index w() const { return shape_.w; }
  Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Vector& data() { return data_; }
  const Vector& data() const { return data_; }

  Scalar& operator()(Index n, Index c, Index y, Index x) {
    return data_[((n * shape_.c + c) * shape_.h + y) * shape_.w + x];
  }
  Scalar operator()(Index n, Index c, Index y, Index x) const {
    return data_[((n * shape_.c + c) * shape_.h + y) * shape_.w + x];
  }

  Scalar* sample_ptr(Index n) { return data_.data() + n * shape_.sample(); }
  const Scalar* sample_ptr(Index n) const { return data_.data() + n * shape_.sample(); }

  /// [C, H*W] view of one sample.
  SampleMap sample(Index n) { return SampleMap(sample_ptr(n), shape_.c, shape_.plane()); }
  ConstSampleMap sample(Index n) const { return ConstSampleMap(sample_ptr(n), shape_.c, shape_.plane()); }

  /// [H, W] view of one channel.
  PlaneMap plane(Index n, Index c) { return PlaneMap(sample_ptr(n) + c * shape_.plane(), shape_.h, shape_.w); }
  ConstPlaneMap plane(Index n, Index c) const {
    return ConstPlaneMap(sample_ptr(n) + c * shape_.plane(), shape_.h, shape_.w);
  }

  void set_zero() { data_.setZero(); }
  bool all_finite() const { return data_.allFinite(); }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>());
  }

 private:
  Shape shape_{};
  Vector data_;
};

inline void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b)) throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
}

}  // namespace lgnet
