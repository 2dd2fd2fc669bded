#include "support.hpp"

#include "diffo/rate_modulation.hpp"
#include "diffo/training.hpp"

using namespace diffo;

namespace {

CalibRow row_at(double bpp, double eta_star, Index k = 256) {
  return {k, bpp, {0.1, 0.9}, {0.0, 0.0}, eta_star};
}

}  // namespace

TEST_CASE("argmin over the grid") {
  CHECK(argmin_eta({0.4}, {7.0}) == 0.4);
  CHECK(argmin_eta({0.1, 0.2, 0.3}, {0.5, 0.2, 0.2}) == 0.2);
  CHECK(argmin_eta({0.1, 0.2, 0.3}, {0.1, 0.2, 0.1}) == 0.1);
  CHECK_THROWS_AS(argmin_eta({0.1, 0.2}, {0.1}), CalibrationError);
  CHECK_THROWS_AS(argmin_eta({}, {}), CalibrationError);
}

TEST_CASE("exact 1/B data gives c exactly") {
  std::vector<CalibRow> rows;
  for (double b : {0.03, 0.05, 0.09, 0.2}) rows.push_back(row_at(b, 0.027 / b));
  const RateModel m = fit_rate_model(rows);
  CHECK(m.c == doctest::Approx(0.027).epsilon(1e-12));
  CHECK(m.eta_min == 0.1);
  CHECK(m.eta_max == 0.9);
}

TEST_CASE("noisy 1/B data recovers c within 10 percent") {
  Rng rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const double c = 0.01 + 0.05 * u(rng);
    std::vector<CalibRow> rows;
    for (int i = 0; i < 8; ++i) {
      const double b = 0.02 + 0.3 * u(rng);
      const double noise = 1.0 + 0.05 * (2.0 * u(rng) - 1.0);
      rows.push_back(row_at(b, c / b * noise));
    }
    CAPTURE(trial);
    CHECK(std::abs(fit_rate_model(rows).c - c) <= 0.1 * c);
  }
}

TEST_CASE("fit needs two distinct rows") {
  CHECK_THROWS_AS(fit_rate_model({row_at(0.05, 0.5)}), CalibrationError);
  CHECK_THROWS_AS(fit_rate_model({row_at(0.05, 0.5), row_at(0.05, 0.4)}), CalibrationError);
  CHECK_THROWS_AS(fit_rate_model({row_at(0.0, 0.5), row_at(0.05, 0.4)}), CalibrationError);
}

TEST_CASE("select_eta is clamped and monotone") {
  const RateModel m{0.027, 0.1, 0.95};
  CHECK(select_eta(0.054, m) == doctest::Approx(0.5));
  CHECK(select_eta(1e-6, m) == 0.95);
  CHECK(select_eta(100.0, m) == 0.1);
  double prev = 2.0;
  for (int i = 1; i <= 10000; ++i) {
    const double e = select_eta(0.001 * i, m);
    REQUIRE(e <= prev);
    prev = e;
  }
  CHECK_THROWS_AS(select_eta(0.0, m), ConfigError);
  CHECK_THROWS_AS(select_eta(-1.0, m), ConfigError);
  CHECK_THROWS_AS((RateModel{0.0, 0.1, 0.9}.validate()), CalibrationError);
  CHECK_THROWS_AS((RateModel{0.1, 0.5, 0.4}.validate()), CalibrationError);
}

TEST_CASE("calibration is reproducible and consistent") {
  ModelConfig cfg;
  cfg.autoencoder.channel_width = 16;
  cfg.autoencoder.latent_dim = 4;
  cfg.autoencoder.num_res_blocks = 1;
  cfg.codebook_size = 32;
  cfg.unet.base_width = 16;
  cfg.unet.num_scales = 2;
  cfg.unet.blocks_per_scale = 1;
  cfg.unet.time_embed_dim = 16;
  Model<float> m(cfg);
  Rng rng(1);
  const std::vector<Image> imgs{synthetic_image(64, 64, 1), synthetic_image(72, 64, 2)};
  m.codebook().init_from_latents(m.encoder().encode(imgs[0]), rng);
  m.set_pmf(build_pmf(dataset_histogram(m, imgs)));
  const std::vector<double> grid{0.2, 0.5, 0.9};
  const CalibRow a = calibrate_eta(m, imgs, grid, 4);
  const CalibRow b = calibrate_eta(m, imgs, grid, 4);
  CHECK(a == b);
  CHECK(a.codebook_size == 32);
  CHECK(a.scores.size() == 3);
  CHECK(a.eta_star == argmin_eta(a.grid, a.scores));
  CHECK(a.bpp > 0.0);
  CHECK(calibrate_eta(m, imgs, {0.5}, 4).eta_star == 0.5);
  CHECK_THROWS_AS(calibrate_eta(m, imgs, {}, 4), CalibrationError);
  CHECK_THROWS_AS(calibrate_eta(m, imgs, {0.5, 0.3}, 4), CalibrationError);
  CHECK_THROWS_AS(calibrate_eta(m, {}, grid, 4), CalibrationError);
}

TEST_CASE("calibration csv and rate model file round trip") {
  test::TempDir dir;
  const std::vector<CalibRow> rows{{64, 0.0412, {0.1, 0.5, 0.9}, {0.3, 0.1, 0.2}, 0.5},
                                   {256, 0.0731, {0.1, 0.5, 0.9}, {0.1, 0.2, 0.3}, 0.1}};
  save_calibration(dir / "c.csv", rows);
  CHECK(load_calibration(dir / "c.csv") == rows);
  const RateModel m{0.0271, 0.1, 0.95};
  save_rate_model(dir / "r.kv", m);
  const RateModel back = load_rate_model(dir / "r.kv");
  CHECK(back.c == m.c);
  CHECK(back.eta_min == m.eta_min);
  CHECK(back.eta_max == m.eta_max);
  CHECK_THROWS_AS(load_rate_model(dir / "missing.kv"), Error);
}
