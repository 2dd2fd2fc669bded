#include "support.hpp"

#include "diffo/image_io.hpp"
#include "diffo/metrics.hpp"
#include "diffo/perceptual.hpp"

using namespace diffo;

namespace {

// Direct-summation single-channel MS-SSIM with a 2-D Gaussian window.
double scalar_ms_ssim(std::vector<double> a, std::vector<double> b, long h, long w) {
  const double weights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double win[11][11];
  double norm = 0.0;
  for (int i = 0; i < 11; ++i) {
    for (int j = 0; j < 11; ++j) {
      win[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 1.5 * 1.5));
      norm += win[i][j];
    }
  }
  double result = 1.0;
  for (int s = 0; s < 5; ++s) {
    double sum_ssim = 0.0, sum_cs = 0.0;
    long count = 0;
    for (long y = 0; y + 11 <= h; ++y) {
      for (long x = 0; x + 11 <= w; ++x) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int i = 0; i < 11; ++i) {
          for (int j = 0; j < 11; ++j) {
            const double g = win[i][j] / norm;
            const double va = a[(y + i) * w + x + j], vb = b[(y + i) * w + x + j];
            ma += g * va;
            mb += g * vb;
            saa += g * va * va;
            sbb += g * vb * vb;
            sab += g * va * vb;
          }
        }
        const double cs = (2 * (sab - ma * mb) + c2) / ((saa - ma * ma) + (sbb - mb * mb) + c2);
        const double lum = (2 * ma * mb + c1) / (ma * ma + mb * mb + c1);
        sum_cs += cs;
        sum_ssim += lum * cs;
        ++count;
      }
    }
    const double term = s == 4 ? sum_ssim / count : sum_cs / count;
    result *= std::pow(std::max(0.0, term), weights[s]);
    if (s == 4) break;
    const long h2 = (h + 1) / 2, w2 = (w + 1) / 2;
    std::vector<double> a2(h2 * w2), b2(h2 * w2);
    for (long y = 0; y < h2; ++y) {
      for (long x = 0; x < w2; ++x) {
        double sa = 0, sb = 0;
        int n = 0;
        for (long yy = 2 * y; yy < std::min(h, 2 * y + 2); ++yy) {
          for (long xx = 2 * x; xx < std::min(w, 2 * x + 2); ++xx) {
            sa += a[yy * w + xx];
            sb += b[yy * w + xx];
            ++n;
          }
        }
        a2[y * w2 + x] = sa / n;
        b2[y * w2 + x] = sb / n;
      }
    }
    a = std::move(a2);
    b = std::move(b2);
    h = h2;
    w = w2;
  }
  return result;
}

double oracle_ms_ssim(const Tensor<double>& a, const Tensor<double>& b) {
  double total = 0.0;
  for (Index c = 0; c < a.c(); ++c) {
    std::vector<double> pa, pb;
    for (Index y = 0; y < a.h(); ++y) {
      for (Index x = 0; x < a.w(); ++x) {
        pa.push_back(a(0, c, y, x));
        pb.push_back(b(0, c, y, x));
      }
    }
    total += scalar_ms_ssim(pa, pb, a.h(), a.w());
  }
  return total / static_cast<double>(a.c());
}

using test::anchor_log_rate;
using test::sample_curve;
using test::test_log_rate;

}  // namespace

TEST_CASE("psnr") {
  const Tensor<double> x = test::random_tensor({1, 3, 16, 16}, 1, 0.1, 0.8);
  CHECK(psnr(x, x) == kPsnrCap);
  const Tensor<double> y(x.shape(), x.array() + 0.1);
  CHECK(psnr(x, y) == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(psnr(x.cast<float>(), y.cast<float>()) == doctest::Approx(20.0).epsilon(1e-5));
  CHECK_THROWS_AS(psnr(x, test::random_tensor({1, 3, 16, 8}, 2)), ShapeError);
}

TEST_CASE("ms-ssim identity, oracle agreement and size limit") {
  const Tensor<double> x = synthetic_image(176, 184, 3).cast<double>();
  CHECK(ms_ssim(x, x) == doctest::Approx(1.0).epsilon(1e-12));
  Rng rng(4);
  const Tensor<double> noise = Tensor<double>::randn(x.shape(), rng);
  const Tensor<double> y(x.shape(), (x.array() + 0.05 * noise.array()).min(1.0).max(0.0));
  const double got = ms_ssim(x, y);
  CHECK(got < 1.0);
  CHECK(std::abs(got - oracle_ms_ssim(x, y)) < 1e-6);
  const Tensor<double> r1 = test::random_tensor({1, 3, 170, 163}, 5, 0.0, 1.0);
  const Tensor<double> r2 = test::random_tensor({1, 3, 170, 163}, 6, 0.0, 1.0);
  CHECK(std::abs(ms_ssim(r1, r2) - oracle_ms_ssim(r1, r2)) < 1e-6);
  CHECK_THROWS_WITH_AS(ms_ssim(Tensor<double>::zeros({1, 3, 160, 200}), Tensor<double>::zeros({1, 3, 160, 200})),
                       doctest::Contains("160"), ShapeError);
}

TEST_CASE("perceptual proxy") {
  const Image x = synthetic_image(64, 64, 7);
  CHECK(perceptual_distance(x, x) == 0.0);
  Rng rng(8);
  const Image noise = Image::randn(x.shape(), rng);
  auto noisy = [&](float s) { return Image(x.shape(), (x.array() + s * noise.array()).min(1.0f).max(0.0f)); };
  const double small = perceptual_distance(x, noisy(0.03f));
  const double large = perceptual_distance(x, noisy(0.2f));
  CHECK(small > 0.0);
  CHECK(small < large);
  CHECK(perceptual_distance(noisy(0.2f), x) == doctest::Approx(large).epsilon(1e-6));

  const PerceptualProxy<double>& proxy = perceptual_proxy_model<double>();
  Var<double> a(test::random_tensor({1, 3, 16, 16}, 9, 0.0, 1.0), true);
  const Var<double> b(test::random_tensor({1, 3, 16, 16}, 10, 0.0, 1.0));
  CHECK(test::fd_rel_error([&] { return proxy.distance(a, b); }, a) < 1e-4);
}

TEST_CASE("pchip interpolant") {
  const Pchip p({0, 1, 2, 4}, {0, 1, 1.5, 4});
  CHECK(p(0) == 0.0);
  CHECK(p(2) == 1.5);
  CHECK(p(4) == 4.0);
  double prev = -1;
  for (double x = 0; x <= 4; x += 0.01) {
    CHECK(p(x) >= prev - 1e-12);
    prev = p(x);
  }
  double numeric = 0.0;
  const int steps = 200000;
  for (int i = 0; i < steps; ++i) numeric += p(0.5 + 3.0 * (i + 0.5) / steps) * 3.0 / steps;
  CHECK(p.integral(0.5, 3.5) == doctest::Approx(numeric).epsilon(1e-9));
  const Pchip flat({0, 1, 2}, {1, 0, 1});
  CHECK(flat.slopes()[1] == 0.0);
  CHECK_THROWS_AS(Pchip({0, 0, 1}, {1, 2, 3}), ConfigError);
}

TEST_CASE("bd-rate closed forms") {
  const std::vector<RdPoint> anchor{{0.1, 28}, {0.2, 31}, {0.4, 33.5}, {0.8, 35}};
  CHECK(bd_rate(anchor, anchor).percent == doctest::Approx(0.0).epsilon(1e-12));
  std::vector<RdPoint> halved = anchor;
  for (auto& p : halved) p.bpp /= 2;
  CHECK(std::abs(bd_rate(anchor, halved).percent + 50.0) < 0.1);
  std::vector<RdPoint> doubled = anchor;
  for (auto& p : doubled) p.bpp *= 2;
  CHECK(bd_rate(anchor, doubled).percent == doctest::Approx(100.0));
}

TEST_CASE("bd-rate on dense curves agrees with trapezoid integration") {
  const auto anchor = sample_curve(anchor_log_rate, 20, 40, 20);
  const auto test_curve = sample_curve(test_log_rate, 21, 41, 20);
  const double want = test::trapezoid_bd_rate(21, 40);
  const BdRate got = bd_rate(anchor, test_curve);
  CHECK_FALSE(got.quadratic_fallback);
  CHECK(std::abs(got.percent - want) < 0.5);

  const double forward = bd_rate(anchor, test_curve).percent;
  const double backward = bd_rate(test_curve, anchor).percent;
  CHECK(forward * backward < 0.0);
}

TEST_CASE("bd-rate input handling") {
  const std::vector<RdPoint> three{{0.1, 28}, {0.2, 31}, {0.4, 33}};
  const BdRate q = bd_rate(three, three);
  CHECK(q.quadratic_fallback);
  CHECK(q.percent == doctest::Approx(0.0).epsilon(1e-12));
  std::vector<RdPoint> shuffled{{0.4, 33}, {0.1, 28}, {0.2, 31}};
  CHECK(bd_rate(three, shuffled).percent == doctest::Approx(0.0).epsilon(1e-12));
  CHECK_THROWS_AS(bd_rate(three, {{0.1, 28}, {0.2, 31}}), ConfigError);
  CHECK_THROWS_AS(bd_rate(three, {{0.1, 40}, {0.2, 41}, {0.3, 42}}), ConfigError);
  CHECK_THROWS_AS(bd_rate(three, {{0.0, 28}, {0.2, 31}, {0.3, 32}}), ConfigError);
}
