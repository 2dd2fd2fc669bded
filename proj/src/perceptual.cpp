#include "diffo/perceptual.hpp"

#include <cmath>

namespace diffo {

namespace {

constexpr std::array<Index, 5> kWidths{3, 16, 32, 64, 64};

}  // namespace

template <typename Scalar>
PerceptualProxy<Scalar>::PerceptualProxy() {
  Rng rng(0);
  for (int s = 0; s < kStages; ++s) {
    const Index in = kWidths[s];
    const Index out = kWidths[s + 1];
    Tensor<double> w = Tensor<double>::randn({out, in, 3, 3}, rng);
    w.array() *= std::sqrt(2.0 / static_cast<double>(in * 9));
    weights_[s] = constant(w.cast<Scalar>());
  }
}

template <typename Scalar>
Var<Scalar> PerceptualProxy<Scalar>::distance(const Var<Scalar>& a, const Var<Scalar>& b) const {
  require_same_shape(a.shape(), b.shape(), "perceptual proxy");
  if (a.shape().c != 3) throw ShapeError("perceptual proxy expects RGB images, got " + a.shape().str());
  const Var<Scalar> shift = constant(Tensor<Scalar>::constant(a.shape(), Scalar(-1)));
  Var<Scalar> fa = Scalar(2) * a + shift;
  Var<Scalar> fb = Scalar(2) * b + shift;
  Var<Scalar> total;
  for (int s = 0; s < kStages; ++s) {
    fa = relu(conv2d(fa, weights_[s], Var<Scalar>(), 2, 1));
    fb = relu(conv2d(fb, weights_[s], Var<Scalar>(), 2, 1));
    Var<Scalar> term = mse(normalize_channels(fa), normalize_channels(fb));
    total = total ? total + term : term;
  }
  return Scalar(1.0 / kStages) * total;
}

template <typename Scalar>
Scalar PerceptualProxy<Scalar>::operator()(const Tensor<Scalar>& a, const Tensor<Scalar>& b) const {
  NoGradGuard guard;
  return item(distance(constant(a), constant(b)));
}

template <typename Scalar>
const PerceptualProxy<Scalar>& perceptual_proxy_model() {
  static const PerceptualProxy<Scalar> model;
  return model;
}

template class PerceptualProxy<float>;
template class PerceptualProxy<double>;
template const PerceptualProxy<float>& perceptual_proxy_model<float>();
template const PerceptualProxy<double>& perceptual_proxy_model<double>();

}  // namespace diffo
