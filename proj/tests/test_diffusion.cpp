#include "support.hpp"

#include "diffo/diffusion.hpp"

using namespace diffo;

namespace {

struct Moments {
  double mean = 0.0;
  double var = 0.0;
};

Moments moments(const Tensor<double>& t) {
  const double m = t.array().mean();
  return {m, (t.array() - m).square().sum() / static_cast<double>(t.size() - 1)};
}

const Shape kMc{1, 1, 1, 100000};

}  // namespace

TEST_CASE("schedule construction and validation") {
  const NoiseSchedule lin = NoiseSchedule::linear(4, 0.8, 1.0);
  CHECK(lin.steps() == 4);
  CHECK(lin.eta(0) == 0.0);
  CHECK(lin.eta(2) == doctest::Approx(0.4));
  CHECK(lin.alpha(1) == lin.eta(1));
  const NoiseSchedule geo = NoiseSchedule::geometric(15, 0.001, 0.9, 1.0);
  CHECK(geo.eta(1) == doctest::Approx(0.001));
  CHECK(geo.eta(15) == doctest::Approx(0.9));
  CHECK(geo.eta(8) == doctest::Approx(std::sqrt(0.001 * 0.9)));
  CHECK(NoiseSchedule::geometric(1, 0.001, 0.9, 1.0).eta(1) == 0.9);
  for (Index t = 1; t <= 15; ++t) CHECK(geo.alpha(t) > 0.0);

  CHECK_THROWS_AS(NoiseSchedule({0.5, 0.5}, 1.0), ScheduleError);
  CHECK_THROWS_AS(NoiseSchedule({0.0, 0.5}, 1.0), ScheduleError);
  CHECK_THROWS_AS(NoiseSchedule({0.5}, -1.0), ScheduleError);
  CHECK_THROWS_AS(lin.check_step(0), ScheduleError);
  CHECK_THROWS_AS(lin.check_step(5), ScheduleError);
  CHECK_THROWS_AS((SingleStepParams{0.0, 0.0, 1.0}.validate()), ScheduleError);
  CHECK_THROWS_AS((SingleStepParams{1.5, 0.0, 1.0}.validate()), ScheduleError);
}

TEST_CASE("forward marginal limits") {
  const Tensor<double> x = test::random_tensor({1, 4, 3, 3}, 1);
  const Tensor<double> y = test::random_tensor({1, 4, 3, 3}, 2);
  Rng rng(0);
  CHECK(max_abs_diff(forward_marginal(x, y, 1, NoiseSchedule::single_step(1.0, 0.0), rng), y) == 0.0);
  CHECK(max_abs_diff(forward_marginal(x, y, 1, NoiseSchedule::single_step(1e-12, 1.0), rng), x) < 1e-5);
  CHECK_THROWS_AS(forward_marginal(x, y, 2, NoiseSchedule::single_step(0.5, 1.0), rng), ScheduleError);
}

TEST_CASE("forward marginal Monte-Carlo moments") {
  const Tensor<double> x = Tensor<double>::zeros(kMc);
  const Tensor<double> y = Tensor<double>::ones(kMc);
  Rng rng(42);
  const Moments m = moments(forward_marginal(x, y, 1, NoiseSchedule::single_step(0.5, 1.0), rng));
  CHECK(std::abs(m.mean - 0.5) <= 4 * std::sqrt(0.5 / 1e5));
  CHECK(std::abs(m.var - 0.5) <= 0.02 * 0.5);
}

TEST_CASE("composed transitions reproduce the marginal at every step") {
  const NoiseSchedule sched = NoiseSchedule::geometric(5, 0.05, 0.9, 0.7);
  const Tensor<double> x = Tensor<double>::constant(kMc, 0.3);
  const Tensor<double> y = Tensor<double>::constant(kMc, -0.8);
  const Tensor<double> e0(kMc, y.array() - x.array());
  Rng rng(7);
  Tensor<double> xt = x;
  for (Index t = 1; t <= 5; ++t) {
    xt = forward_transition(xt, e0, t, sched, rng);
    const Moments m = moments(xt);
    const double want_mean = 0.3 + sched.eta(t) * (-1.1);
    const double want_var = 0.49 * sched.eta(t);
    CAPTURE(t);
    CHECK(std::abs(m.mean - want_mean) <= 0.03 * std::abs(want_mean));
    CHECK(std::abs(m.var - want_var) <= 0.03 * want_var);
  }
}

TEST_CASE("one-step forward equals the general marginal at T = 1") {
  const Tensor<double> x = test::random_tensor({2, 8, 4, 4}, 3);
  const Tensor<double> y = test::random_tensor({2, 8, 4, 4}, 4);
  for (double eta : {0.05, 0.3, 0.9, 1.0}) {
    Rng a(11), b(11);
    const auto one = single_step_forward(x, y, SingleStepParams{eta, 0.0, 1.3}, a);
    const auto general = forward_marginal(x, y, 1, NoiseSchedule::single_step(eta, 1.3), b);
    CHECK(max_abs_diff(one, general) <= 1e-12);
  }
}

TEST_CASE("reverse step mean and variance") {
  const NoiseSchedule sched = NoiseSchedule::linear(4, 0.8, 1.0);
  const Tensor<double> xt = test::random_tensor({1, 2, 3, 3}, 5);
  const Tensor<double> f = test::random_tensor({1, 2, 3, 3}, 6);
  Rng rng(0);
  CHECK(max_abs_diff(reverse_step(xt, f, 1, sched, SampleMode::deterministic, rng), f) == 0.0);
  CHECK(max_abs_diff(reverse_step(xt, f, 1, sched, SampleMode::stochastic, rng), f) == 0.0);
  for (Index t = 2; t <= 4; ++t) {
    CHECK(max_abs_diff(reverse_step(xt, xt, t, sched, SampleMode::deterministic, rng), xt) < 1e-15);
  }

  const Tensor<double> zero = Tensor<double>::zeros(kMc);
  const Moments m = moments(reverse_step(zero, zero, 3, sched, SampleMode::stochastic, rng));
  const double want = (sched.eta(2) / sched.eta(3)) * sched.alpha(3);
  CHECK(std::abs(m.mean) <= 4 * std::sqrt(want / 1e5));
  CHECK(std::abs(m.var - want) <= 0.03 * want);
  CHECK_THROWS_AS(reverse_step(xt, f, 0, sched, SampleMode::deterministic, rng), ScheduleError);
}

TEST_CASE("noise-free reverse chain with an oracle denoiser recovers x") {
  const Tensor<double> x = test::random_tensor({1, 4, 5, 5}, 8);
  const Tensor<double> y = test::random_tensor({1, 4, 5, 5}, 9);
  const NoiseSchedule sched = NoiseSchedule::linear(4, 0.9, 0.0);
  Rng rng(1);
  Tensor<double> xt = forward_marginal(x, y, 4, sched, rng);
  for (Index t = 4; t >= 1; --t) xt = reverse_step(xt, x, t, sched, SampleMode::deterministic, rng);
  CHECK(max_abs_diff(xt, x) < 1e-6);

  const Denoiser<double> oracle = [&](const Tensor<double>&, const Tensor<double>&, Index, double) { return x; };
  CHECK(max_abs_diff(sample_chain(y, sched, oracle, SampleMode::deterministic, rng), x) < 1e-6);
}

TEST_CASE("single-step decode") {
  const Tensor<double> y = test::random_tensor({1, 3, 4, 4}, 10);
  const Denoiser<double> identity = [](const Tensor<double>& xt, const Tensor<double>&, Index, double) {
    return xt;
  };
  Rng rng(3);
  const SingleStepParams params{0.9, 0.0, 1.0};
  const Tensor<double> x_tilde = decoder_noisy_input(y, params, rng);
  CHECK(max_abs_diff(single_step_decode(y, x_tilde, params, identity, SampleMode::deterministic, rng), x_tilde) ==
        0.0);
  CHECK(max_abs_diff(single_step_decode(y, x_tilde, params, identity, SampleMode::stochastic, rng), x_tilde) == 0.0);
  CHECK(max_abs_diff(decoder_noisy_input(y, SingleStepParams{0.9, 0.0, 0.0}, rng), y) == 0.0);

  Index seen_t = -1;
  const Denoiser<double> probe = [&](const Tensor<double>& xt, const Tensor<double>&, Index t, double) {
    seen_t = t;
    return xt;
  };
  single_step_decode(y, x_tilde, params, probe, SampleMode::deterministic, rng);
  CHECK(seen_t == 1);

  auto run = [&](std::uint64_t seed, SampleMode mode) {
    Rng r(seed);
    const SingleStepParams p{0.9, 0.2, 1.0};
    return single_step_decode(y, decoder_noisy_input(y, p, r), p, identity, mode, r);
  };
  CHECK(max_abs_diff(run(5, SampleMode::stochastic), run(5, SampleMode::stochastic)) == 0.0);
  CHECK(max_abs_diff(run(5, SampleMode::stochastic), run(6, SampleMode::stochastic)) > 0.0);
}
