#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "diffo/errors.hpp"

namespace diffo {

using Index = Eigen::Index;
using Rng = std::mt19937_64;

/// NCHW extent of a dense batch tensor.
struct Shape {
  Index n = 0;
  Index c = 0;
  Index h = 0;
  Index w = 0;

  Index size() const { return n * c * h * w; }
  Index plane() const { return h * w; }
  Index sample() const { return c * h * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

/// Dense batch tensor in NCHW order backed by a contiguous Eigen array.
///
/// Images are (n, 3, H, W) with values in [0, 1]; latents are (n, d, h, w).
/// A single sample's data is viewable as a column-major (h*w) x c matrix,
/// which is the layout the convolution kernels multiply against.
template <typename Scalar>
class Tensor {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  Tensor() = default;
  explicit Tensor(const Shape& shape) : shape_(shape), data_(shape.size()) {}
  Tensor(const Shape& shape, Array data);

  static Tensor zeros(const Shape& shape) { return constant(shape, Scalar(0)); }
  static Tensor ones(const Shape& shape) { return constant(shape, Scalar(1)); }
  static Tensor constant(const Shape& shape, Scalar value);
  /// Standard-normal entries drawn in storage order.
  static Tensor randn(const Shape& shape, Rng& rng);
  static Tensor uniform(const Shape& shape, Scalar lo, Scalar hi, Rng& rng);

  const Shape& shape() const { return shape_; }
  Index n() const { return shape_.n; }
  Index c() const { return shape_.c; }
  Index h() const { return shape_.h; }
  Index w() const { return shape_.w; }
  Index size() const { return shape_.size(); }
  bool empty() const { return data_.size() == 0; }

  Array& array() { return data_; }
  const Array& array() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Scalar& operator()(Index n, Index c, Index y, Index x) {
    return data_[((n * shape_.c + c) * shape_.h + y) * shape_.w + x];
  }
  Scalar operator()(Index n, Index c, Index y, Index x) const {
    return data_[((n * shape_.c + c) * shape_.h + y) * shape_.w + x];
  }

  /// Column-major (h*w) x c view of sample n.
  Eigen::Map<Matrix> sample(Index n) {
    return {data() + n * shape_.sample(), shape_.plane(), shape_.c};
  }
  Eigen::Map<const Matrix> sample(Index n) const {
    return {data() + n * shape_.sample(), shape_.plane(), shape_.c};
  }

  /// Copy of samples [first, first + count).
  Tensor slice(Index first, Index count) const;
  /// Same data, new shape of equal size.
  Tensor reshaped(const Shape& shape) const;

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>());
  }

  bool all_finite() const { return data_.isFinite().all(); }

 private:
  Shape shape_;
  Array data_;
};

/// Stack equally shaped single- or multi-sample tensors along n.
template <typename Scalar>
Tensor<Scalar> concat_batch(const std::vector<Tensor<Scalar>>& parts);

template <typename Scalar>
Scalar max_abs_diff(const Tensor<Scalar>& a, const Tensor<Scalar>& b);

void require_same_shape(const Shape& a, const Shape& b, const char* what);

}  // namespace diffo
