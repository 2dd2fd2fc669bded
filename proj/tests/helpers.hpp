#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "diffo/entropy.hpp"
#include "diffo/metrics.hpp"
#include "diffo/ops.hpp"

namespace diffo::test {

/// Relative L2 error between an analytic gradient and central differences of
/// f with respect to x, probing at most max_probe evenly spaced entries.
inline double fd_rel_error(const std::function<Var<double>()>& f, Var<double> x, double h = 1e-6,
                           Index max_probe = 64) {
  x.zero_grad();
  f().backward();
  const Tensor<double> analytic = x.grad();
  const Index n = x.value().size();
  const Index stride = std::max<Index>(1, n / max_probe);
  double num2 = 0.0, den_a = 0.0, den_n = 0.0;
  for (Index i = 0; i < n; i += stride) {
    double& v = x.mutable_value().array()[i];
    const double saved = v;
    v = saved + h;
    const double up = item(f());
    v = saved - h;
    const double down = item(f());
    v = saved;
    const double numeric = (up - down) / (2 * h);
    const double a = analytic.array()[i];
    num2 += (a - numeric) * (a - numeric);
    den_a += a * a;
    den_n += numeric * numeric;
  }
  const double scale = std::sqrt(std::max(den_a, den_n));
  return scale == 0.0 ? std::sqrt(num2) : std::sqrt(num2) / scale;
}

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "diffo_test_XXXXXX").string();
    path_ = ::mkdtemp(tmpl.data());
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline Tensor<double> random_tensor(const Shape& s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  return Tensor<double>::uniform(s, lo, hi, rng);
}

struct FuzzJob {
  PmfTable pmf;
  std::vector<std::int32_t> q;
};

/// Random PMF (dense, sparse or near-flat histogram) and a symbol sequence
/// drawn mostly from it, with K in [2, max_k] and length in [0, max_n].
inline FuzzJob fuzz_job(std::uint64_t seed, Index max_k, size_t max_n) {
  Rng rng(seed);
  const Index k = 2 + static_cast<Index>(rng() % (max_k - 1));
  std::vector<std::uint64_t> hist(k);
  const int style = static_cast<int>(seed % 3);
  for (auto& h : hist) {
    h = style == 0 ? rng() % 50 : style == 1 ? (rng() % 8 == 0 ? rng() % 100000 : 0) : rng() % 3;
  }
  FuzzJob job{build_pmf(hist), std::vector<std::int32_t>(rng() % (max_n + 1))};
  for (auto& s : job.q) {
    s = rng() % 4 == 0 ? static_cast<std::int32_t>(rng() % k) : job.pmf.symbol_for(rng() % kPmfTotal);
  }
  return job;
}

/// log2(rate) as a smooth increasing function of quality.
inline double anchor_log_rate(double m) { return -6.0 + 0.2 * (m - 20) + 0.004 * (m - 20) * (m - 20); }
inline double test_log_rate(double m) {
  return -6.3 + 0.19 * (m - 20) + 0.005 * (m - 20) * (m - 20) + 0.02 * std::sin(m);
}

inline std::vector<RdPoint> sample_curve(double (*f)(double), double lo, double hi, int n) {
  std::vector<RdPoint> pts;
  for (int i = 0; i < n; ++i) {
    const double m = lo + (hi - lo) * i / (n - 1);
    pts.push_back({std::exp2(f(m)), m});
  }
  return pts;
}

/// Percent BD-rate of test_log_rate against anchor_log_rate over [lo, hi] by
/// the trapezoid rule.
inline double trapezoid_bd_rate(double lo, double hi, int n = 200000) {
  double integral = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double m = lo + (hi - lo) * i / n;
    integral += (i == 0 || i == n ? 0.5 : 1.0) * (test_log_rate(m) - anchor_log_rate(m));
  }
  return 100.0 * (std::exp2(integral / n) - 1.0);
}

}  // namespace diffo::test
