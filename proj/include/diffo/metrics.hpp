#pragma once

#include <vector>

#include "diffo/tensor.hpp"

namespace diffo {

/// PSNR cap reported for identical images.
inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / mse) in dB over the whole tensor, capped at 99 dB.
template <typename Scalar>
double psnr(const Tensor<Scalar>& a, const Tensor<Scalar>& b);

/// Multi-scale SSIM for images in [0, 1]: five scales with weights
/// (0.0448, 0.2856, 0.3001, 0.2363, 0.1333), 11-tap Gaussian window
/// (sigma 1.5), K1 = 0.01, K2 = 0.03, valid filtering, 2x2 average pooling
/// between scales (an odd trailing row or column is averaged on its own).
/// Contrast-structure terms are clamped at 0. Averaged over channels and the
/// batch. Both sides must exceed 160 pixels.
template <typename Scalar>
double ms_ssim(const Tensor<Scalar>& a, const Tensor<Scalar>& b);

/// Mean perceptual-proxy distance (see PerceptualProxy).
template <typename Scalar>
double perceptual_distance(const Tensor<Scalar>& a, const Tensor<Scalar>& b);

struct RdPoint {
  double bpp = 0.0;
  double metric = 0.0;
};

struct BdRate {
  double percent = 0.0;
  /// Set when a curve had only three points and a quadratic was fitted.
  bool quadratic_fallback = false;
};

/// Bjontegaard delta rate of test against anchor: mean difference of log2(rate)
/// over the common metric interval, piecewise-cubic Hermite (Fritsch-Carlson)
/// interpolation in metric, integrated analytically; returns 100 (2^delta - 1).
/// Needs at least three points per curve, distinct metric values and positive
/// rates; throws ConfigError otherwise or when the metric ranges do not overlap.
BdRate bd_rate(std::vector<RdPoint> anchor, std::vector<RdPoint> test);

/// Monotone piecewise-cubic Hermite interpolant through (x, y), x strictly increasing.
class Pchip {
 public:
  Pchip(std::vector<double> x, std::vector<double> y);
  double operator()(double x) const;
  /// Exact integral over [a, b] within the knot range.
  double integral(double a, double b) const;
  const std::vector<double>& slopes() const { return d_; }

 private:
  double integral_from_start(double x) const;

  std::vector<double> x_, y_, d_;
};

}  // namespace diffo
