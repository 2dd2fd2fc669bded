#include "diffo/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "diffo/perceptual.hpp"

namespace diffo {

namespace {

using Plane = Eigen::ArrayXXd;

constexpr std::array<double, 5> kMsSsimWeights{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

Eigen::ArrayXd gaussian_window() {
  Eigen::ArrayXd g(kWindow);
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    g[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
  }
  return g / g.sum();
}

// Separable valid filtering; rows index y.
Plane filter_valid(const Plane& p, const Eigen::ArrayXd& g) {
  const Index h = p.rows() - kWindow + 1;
  const Index w = p.cols() - kWindow + 1;
  Plane tmp = Plane::Zero(h, p.cols());
  for (int k = 0; k < kWindow; ++k) tmp += g[k] * p.middleRows(k, h);
  Plane out = Plane::Zero(h, w);
  for (int k = 0; k < kWindow; ++k) out += g[k] * tmp.middleCols(k, w);
  return out;
}

// 2x2 mean; odd edges average the pixels present.
Plane downsample(const Plane& p) {
  const Index h = (p.rows() + 1) / 2;
  const Index w = (p.cols() + 1) / 2;
  Plane out(h, w);
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      double sum = 0.0;
      int count = 0;
      for (Index dy = 0; dy < 2; ++dy) {
        for (Index dx = 0; dx < 2; ++dx) {
          const Index yy = 2 * y + dy;
          const Index xx = 2 * x + dx;
          if (yy < p.rows() && xx < p.cols()) {
            sum += p(yy, xx);
            ++count;
          }
        }
      }
      out(y, x) = sum / count;
    }
  }
  return out;
}

struct SsimTerms {
  double ssim;
  double cs;
};

SsimTerms ssim_terms(const Plane& a, const Plane& b, const Eigen::ArrayXd& g) {
  const Plane mu_a = filter_valid(a, g);
  const Plane mu_b = filter_valid(b, g);
  const Plane var_a = filter_valid(a * a, g) - mu_a * mu_a;
  const Plane var_b = filter_valid(b * b, g) - mu_b * mu_b;
  const Plane cov = filter_valid(a * b, g) - mu_a * mu_b;
  const Plane cs = (2.0 * cov + kC2) / (var_a + var_b + kC2);
  const Plane lum = (2.0 * mu_a * mu_b + kC1) / (mu_a * mu_a + mu_b * mu_b + kC1);
  return {(lum * cs).mean(), cs.mean()};
}

template <typename Scalar>
Plane channel_plane(const Tensor<Scalar>& t, Index n, Index c) {
  Plane p(t.h(), t.w());
  for (Index y = 0; y < t.h(); ++y) {
    for (Index x = 0; x < t.w(); ++x) p(y, x) = static_cast<double>(t(n, c, y, x));
  }
  return p;
}

}  // namespace

template <typename Scalar>
double psnr(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_same_shape(a.shape(), b.shape(), "psnr");
  if (a.size() == 0) throw ShapeError("psnr of empty images");
  const double err = (a.array().template cast<double>() - b.array().template cast<double>()).square().mean();
  if (err <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / err));
}

template <typename Scalar>
double ms_ssim(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_same_shape(a.shape(), b.shape(), "ms_ssim");
  const Index min_side = (kWindow - 1) << (kMsSsimWeights.size() - 1);
  if (a.h() <= min_side || a.w() <= min_side) {
    throw ShapeError("MS-SSIM needs images larger than " + std::to_string(min_side) + " pixels per side, got " +
                     std::to_string(a.h()) + "x" + std::to_string(a.w()));
  }
  const Eigen::ArrayXd g = gaussian_window();
  double total = 0.0;
  for (Index n = 0; n < a.n(); ++n) {
    for (Index c = 0; c < a.c(); ++c) {
      Plane pa = channel_plane(a, n, c);
      Plane pb = channel_plane(b, n, c);
      double value = 1.0;
      for (size_t s = 0; s < kMsSsimWeights.size(); ++s) {
        const SsimTerms terms = ssim_terms(pa, pb, g);
        const bool last = s + 1 == kMsSsimWeights.size();
        const double base = std::max(0.0, last ? terms.ssim : terms.cs);
        value *= std::pow(base, kMsSsimWeights[s]);
        if (!last) {
          pa = downsample(pa);
          pb = downsample(pb);
        }
      }
      total += value;
    }
  }
  return total / static_cast<double>(a.n() * a.c());
}

template <typename Scalar>
double perceptual_distance(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return static_cast<double>(perceptual_proxy_model<Scalar>()(a, b));
}

template double psnr(const Tensor<float>&, const Tensor<float>&);
template double psnr(const Tensor<double>&, const Tensor<double>&);
template double ms_ssim(const Tensor<float>&, const Tensor<float>&);
template double ms_ssim(const Tensor<double>&, const Tensor<double>&);
template double perceptual_distance(const Tensor<float>&, const Tensor<float>&);
template double perceptual_distance(const Tensor<double>&, const Tensor<double>&);

Pchip::Pchip(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
  const size_t n = x_.size();
  if (n < 2 || y_.size() != n) throw ConfigError("PCHIP needs at least two (x, y) pairs");
  std::vector<double> h(n - 1), delta(n - 1);
  for (size_t i = 0; i + 1 < n; ++i) {
    h[i] = x_[i + 1] - x_[i];
    if (!(h[i] > 0.0)) throw ConfigError("PCHIP knots must be strictly increasing");
    delta[i] = (y_[i + 1] - y_[i]) / h[i];
  }
  d_.assign(n, 0.0);
  if (n == 2) {
    d_[0] = d_[1] = delta[0];
    return;
  }
  for (size_t k = 1; k + 1 < n; ++k) {
    if (delta[k - 1] * delta[k] <= 0.0) continue;
    const double w1 = 2.0 * h[k] + h[k - 1];
    const double w2 = h[k] + 2.0 * h[k - 1];
    d_[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
  }
  auto edge = [](double h0, double h1, double m0, double m1) {
    double d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if (std::signbit(d) != std::signbit(m0) || m0 == 0.0) {
      d = 0.0;
    } else if (std::signbit(m0) != std::signbit(m1) && std::abs(d) > 3.0 * std::abs(m0)) {
      d = 3.0 * m0;
    }
    return d;
  };
  d_[0] = edge(h[0], h[1], delta[0], delta[1]);
  d_[n - 1] = edge(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
}

double Pchip::operator()(double x) const {
  auto it = std::upper_bound(x_.begin(), x_.end(), x);
  size_t i = std::clamp<size_t>(static_cast<size_t>(it - x_.begin()), 1, x_.size() - 1) - 1;
  const double h = x_[i + 1] - x_[i];
  const double u = (x - x_[i]) / h;
  const double u2 = u * u;
  const double u3 = u2 * u;
  return y_[i] * (2 * u3 - 3 * u2 + 1) + h * d_[i] * (u3 - 2 * u2 + u) + y_[i + 1] * (-2 * u3 + 3 * u2) +
         h * d_[i + 1] * (u3 - u2);
}

double Pchip::integral_from_start(double x) const {
  double total = 0.0;
  for (size_t i = 0; i + 1 < x_.size(); ++i) {
    if (x <= x_[i]) break;
    const double h = x_[i + 1] - x_[i];
    const double u = std::min(1.0, (x - x_[i]) / h);
    const double u2 = u * u;
    const double u3 = u2 * u;
    const double u4 = u3 * u;
    total += h * (y_[i] * (u4 / 2 - u3 + u) + h * d_[i] * (u4 / 4 - 2 * u3 / 3 + u2 / 2) +
                  y_[i + 1] * (-u4 / 2 + u3) + h * d_[i + 1] * (u4 / 4 - u3 / 3));
  }
  return total;
}

double Pchip::integral(double a, double b) const {
  if (a < x_.front() || b > x_.back() || a > b) throw ConfigError("PCHIP integral outside the knot range");
  return integral_from_start(b) - integral_from_start(a);
}

namespace {

struct Curve {
  std::vector<double> metric;
  std::vector<double> log_rate;
};

Curve prepare(std::vector<RdPoint> points, const char* name) {
  if (points.size() < 3) {
    throw ConfigError(std::string("BD-rate needs at least 3 points on the ") + name + " curve");
  }
  std::sort(points.begin(), points.end(), [](const RdPoint& a, const RdPoint& b) { return a.metric < b.metric; });
  Curve c;
  for (const RdPoint& p : points) {
    if (!(p.bpp > 0.0) || !std::isfinite(p.bpp) || !std::isfinite(p.metric)) {
      throw ConfigError(std::string("BD-rate needs positive finite rates on the ") + name + " curve");
    }
    if (!c.metric.empty() && p.metric == c.metric.back()) {
      throw ConfigError(std::string("duplicate metric value on the ") + name + " curve");
    }
    c.metric.push_back(p.metric);
    c.log_rate.push_back(std::log2(p.bpp));
  }
  return c;
}

// Integral over [lo, hi] of the quadratic through three points.
double quadratic_integral(const Curve& c, double lo, double hi) {
  Eigen::Matrix3d a;
  Eigen::Vector3d rhs;
  for (int i = 0; i < 3; ++i) {
    a(i, 0) = 1.0;
    a(i, 1) = c.metric[i];
    a(i, 2) = c.metric[i] * c.metric[i];
    rhs[i] = c.log_rate[i];
  }
  const Eigen::Vector3d p = a.colPivHouseholderQr().solve(rhs);
  auto antiderivative = [&](double x) { return p[0] * x + p[1] * x * x / 2 + p[2] * x * x * x / 3; };
  return antiderivative(hi) - antiderivative(lo);
}

double curve_integral(const Curve& c, double lo, double hi) {
  if (c.metric.size() == 3) return quadratic_integral(c, lo, hi);
  return Pchip(c.metric, c.log_rate).integral(lo, hi);
}

}  // namespace

BdRate bd_rate(std::vector<RdPoint> anchor, std::vector<RdPoint> test) {
  const Curve a = prepare(std::move(anchor), "anchor");
  const Curve t = prepare(std::move(test), "test");
  const double lo = std::max(a.metric.front(), t.metric.front());
  const double hi = std::min(a.metric.back(), t.metric.back());
  if (!(hi > lo)) throw ConfigError("BD-rate curves have no overlapping metric range");
  const double delta = (curve_integral(t, lo, hi) - curve_integral(a, lo, hi)) / (hi - lo);
  return {100.0 * (std::exp2(delta) - 1.0), a.metric.size() == 3 || t.metric.size() == 3};
}

}  // namespace diffo
