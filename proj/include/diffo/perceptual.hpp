#pragma once

#include <array>

#include "diffo/ops.hpp"

namespace diffo {

/// Fixed random-feature image distance.
///
/// Four stride-2 3x3 conv stages (3 -> 16 -> 32 -> 64 -> 64 channels, ReLU,
/// He-normal weights from seed 0, zero bias) applied to 2X - 1. Each stage's
/// features are scaled to unit length per position; the distance is the mean
/// over stages of the mean squared feature difference. distance(a, a) == 0.
template <typename Scalar>
class PerceptualProxy {
 public:
  static constexpr int kStages = 4;

  PerceptualProxy();

  /// Differentiable distance averaged over the batch; gradients reach both inputs.
  Var<Scalar> distance(const Var<Scalar>& a, const Var<Scalar>& b) const;
  Scalar operator()(const Tensor<Scalar>& a, const Tensor<Scalar>& b) const;

 private:
  std::array<Var<Scalar>, kStages> weights_;
};

/// Shared instance (the weights are a pure function of the fixed seed).
template <typename Scalar>
const PerceptualProxy<Scalar>& perceptual_proxy_model();

}  // namespace diffo
