#include "diffo/tensor.hpp"

#include <sstream>
#include <vector>

namespace diffo {

std::string Shape::str() const {
  std::ostringstream os;
  os << "(" << n << ", " << c << ", " << h << ", " << w << ")";
  return os.str();
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
  }
}

template <typename Scalar>
Tensor<Scalar>::Tensor(const Shape& shape, Array data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.size()) {
    throw ShapeError("tensor data size does not match shape " + shape_.str());
  }
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::constant(const Shape& shape, Scalar value) {
  Tensor t(shape);
  t.data_.setConstant(value);
  return t;
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::randn(const Shape& shape, Rng& rng) {
  Tensor t(shape);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Index i = 0; i < t.size(); ++i) t.data_[i] = static_cast<Scalar>(normal(rng));
  return t;
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::uniform(const Shape& shape, Scalar lo, Scalar hi, Rng& rng) {
  Tensor t(shape);
  std::uniform_real_distribution<double> dist(static_cast<double>(lo), static_cast<double>(hi));
  for (Index i = 0; i < t.size(); ++i) t.data_[i] = static_cast<Scalar>(dist(rng));
  return t;
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::slice(Index first, Index count) const {
  if (first < 0 || count < 0 || first + count > shape_.n) {
    throw ShapeError("batch slice out of range for " + shape_.str());
  }
  Shape s = shape_;
  s.n = count;
  Tensor out(s);
  out.data_ = data_.segment(first * shape_.sample(), count * shape_.sample());
  return out;
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::reshaped(const Shape& shape) const {
  if (shape.size() != size()) {
    throw ShapeError("cannot reshape " + shape_.str() + " to " + shape.str());
  }
  return Tensor(shape, data_);
}

template <typename Scalar>
Tensor<Scalar> concat_batch(const std::vector<Tensor<Scalar>>& parts) {
  if (parts.empty()) throw ShapeError("concat_batch of zero tensors");
  Shape s = parts.front().shape();
  Index total = 0;
  for (const auto& p : parts) {
    Shape ps = p.shape();
    if (ps.c != s.c || ps.h != s.h || ps.w != s.w) {
      throw ShapeError("concat_batch: mismatched sample shape " + ps.str());
    }
    total += ps.n;
  }
  s.n = total;
  Tensor<Scalar> out(s);
  Index offset = 0;
  for (const auto& p : parts) {
    out.array().segment(offset, p.size()) = p.array();
    offset += p.size();
  }
  return out;
}

template <typename Scalar>
Scalar max_abs_diff(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_same_shape(a.shape(), b.shape(), "max_abs_diff");
  if (a.size() == 0) return Scalar(0);
  return (a.array() - b.array()).abs().maxCoeff();
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> concat_batch(const std::vector<Tensor<float>>&);
template Tensor<double> concat_batch(const std::vector<Tensor<double>>&);
template float max_abs_diff(const Tensor<float>&, const Tensor<float>&);
template double max_abs_diff(const Tensor<double>&, const Tensor<double>&);

}  // namespace diffo
