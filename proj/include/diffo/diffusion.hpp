#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "diffo/tensor.hpp"

namespace diffo {

/// Shift schedule eta_0 = 0 < eta_1 < ... < eta_T with noise magnitude kappa.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;
  /// etas holds eta_1..eta_T.
  NoiseSchedule(std::vector<double> etas, double kappa);

  /// eta_t = eta_min * (eta_max / eta_min)^((t - 1) / (T - 1)); T = 1 gives {eta_max}.
  static NoiseSchedule geometric(Index steps, double eta_min, double eta_max, double kappa);
  /// eta_t = eta_max * t / T.
  static NoiseSchedule linear(Index steps, double eta_max, double kappa);
  static NoiseSchedule single_step(double eta_q, double kappa);

  Index steps() const { return static_cast<Index>(eta_.size()) - 1; }
  /// eta_t for t in [0, T].
  double eta(Index t) const;
  /// alpha_t = eta_t - eta_{t-1} for t in [1, T].
  double alpha(Index t) const;
  double kappa() const { return kappa_; }
  /// Throws ScheduleError unless 1 <= t <= T.
  void check_step(Index t) const;

 private:
  std::vector<double> eta_{0.0};
  double kappa_ = 1.0;
};

enum class SampleMode { deterministic, stochastic };

/// Forward and reverse noise scales of the one-step process.
struct SingleStepParams {
  double eta_q = 0.9;
  double eta_p = 0.0;
  double kappa = 1.0;

  void validate() const;
};

/// out = a + s * b, elementwise.
template <typename Scalar>
Tensor<Scalar> axpy(const Tensor<Scalar>& a, double s, const Tensor<Scalar>& b) {
  require_same_shape(a.shape(), b.shape(), "axpy");
  return Tensor<Scalar>(a.shape(), a.array() + static_cast<Scalar>(s) * b.array());
}

/// a + scale * eps with eps standard normal; scale 0 draws nothing.
template <typename Scalar>
Tensor<Scalar> add_noise(const Tensor<Scalar>& a, double scale, Rng& rng) {
  if (scale == 0.0) return a;
  return axpy(a, scale, Tensor<Scalar>::randn(a.shape(), rng));
}

/// x_t = x + eta_t (y - x) + kappa sqrt(eta_t) eps, evaluated as
/// (1 - eta_t) x + eta_t y so that eta_t = 1 lands exactly on y.
template <typename Scalar>
Tensor<Scalar> forward_marginal(const Tensor<Scalar>& x, const Tensor<Scalar>& y, Index t,
                                const NoiseSchedule& schedule, Rng& rng) {
  require_same_shape(x.shape(), y.shape(), "forward_marginal");
  schedule.check_step(t);
  const auto eta = static_cast<Scalar>(schedule.eta(t));
  Tensor<Scalar> shifted(x.shape(), (Scalar(1) - eta) * x.array() + eta * y.array());
  return add_noise(shifted, schedule.kappa() * std::sqrt(eta), rng);
}

/// x_t = x_{t-1} + alpha_t e0 + kappa sqrt(alpha_t) eps, with e0 = y - x.
template <typename Scalar>
Tensor<Scalar> forward_transition(const Tensor<Scalar>& x_prev, const Tensor<Scalar>& residual,
                                  Index t, const NoiseSchedule& schedule, Rng& rng) {
  schedule.check_step(t);
  const double alpha = schedule.alpha(t);
  return add_noise(axpy(x_prev, alpha, residual), schedule.kappa() * std::sqrt(alpha), rng);
}

/// Reverse-process mean (eta_{t-1} / eta_t) x_t + (alpha_t / eta_t) f_out, plus
/// noise of variance kappa^2 (eta_{t-1} / eta_t) alpha_t in stochastic mode.
template <typename Scalar>
Tensor<Scalar> reverse_step(const Tensor<Scalar>& x_t, const Tensor<Scalar>& f_out, Index t,
                            const NoiseSchedule& schedule, SampleMode mode, Rng& rng) {
  require_same_shape(x_t.shape(), f_out.shape(), "reverse_step");
  schedule.check_step(t);
  const double eta = schedule.eta(t);
  if (!(eta > 0.0)) throw ScheduleError("reverse_step: eta_t must be positive");
  const double keep = schedule.eta(t - 1) / eta;
  const double take = schedule.alpha(t) / eta;
  Tensor<Scalar> mu(x_t.shape(), static_cast<Scalar>(keep) * x_t.array() +
                                     static_cast<Scalar>(take) * f_out.array());
  if (mode == SampleMode::deterministic) return mu;
  const double var = schedule.kappa() * schedule.kappa() * keep * schedule.alpha(t);
  return add_noise(mu, std::sqrt(var), rng);
}

/// Encoder-side one-step forward x_tilde = (1 - eta_q) x + eta_q y + kappa sqrt(eta_q) eps.
template <typename Scalar>
Tensor<Scalar> single_step_forward(const Tensor<Scalar>& x, const Tensor<Scalar>& y,
                                   const SingleStepParams& params, Rng& rng) {
  params.validate();
  require_same_shape(x.shape(), y.shape(), "single_step_forward");
  const auto eta = static_cast<Scalar>(params.eta_q);
  Tensor<Scalar> out(x.shape(), (Scalar(1) - eta) * x.array() + eta * y.array());
  return add_noise(out, params.kappa * std::sqrt(params.eta_q), rng);
}

/// Decoder-side noisy input y + kappa sqrt(eta_q) eps; the clean latent is
/// unknown at the decoder.
template <typename Scalar>
Tensor<Scalar> decoder_noisy_input(const Tensor<Scalar>& y, const SingleStepParams& params, Rng& rng) {
  params.validate();
  return add_noise(y, params.kappa * std::sqrt(params.eta_q), rng);
}

/// f_theta(x_t, y, t, eta_t): clean-latent estimate.
template <typename Scalar>
using Denoiser = std::function<Tensor<Scalar>(const Tensor<Scalar>&, const Tensor<Scalar>&, Index, double)>;

/// x_hat = f(x_tilde, y) plus kappa sqrt(eta_p) eps in stochastic mode.
template <typename Scalar>
Tensor<Scalar> single_step_decode(const Tensor<Scalar>& y, const Tensor<Scalar>& x_tilde,
                                  const SingleStepParams& params, const Denoiser<Scalar>& f,
                                  SampleMode mode, Rng& rng) {
  params.validate();
  require_same_shape(y.shape(), x_tilde.shape(), "single_step_decode");
  Tensor<Scalar> x_hat = f(x_tilde, y, 1, params.eta_q);
  require_same_shape(x_hat.shape(), y.shape(), "single_step_decode output");
  if (mode == SampleMode::stochastic) return add_noise(x_hat, params.kappa * std::sqrt(params.eta_p), rng);
  return x_hat;
}

/// Full reverse chain from x_T = y + kappa sqrt(eta_T) eps down to x_0.
template <typename Scalar>
Tensor<Scalar> sample_chain(const Tensor<Scalar>& y, const NoiseSchedule& schedule,
                            const Denoiser<Scalar>& f, SampleMode mode, Rng& rng) {
  const Index steps = schedule.steps();
  if (steps < 1) throw ScheduleError("sample_chain: empty schedule");
  Tensor<Scalar> x = add_noise(y, schedule.kappa() * std::sqrt(schedule.eta(steps)), rng);
  for (Index t = steps; t >= 1; --t) {
    x = reverse_step(x, f(x, y, t, schedule.eta(t)), t, schedule, mode, rng);
  }
  return x;
}

}  // namespace diffo
