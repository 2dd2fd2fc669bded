#include "diffo/diffusion.hpp"

#include <string>

namespace diffo {

NoiseSchedule::NoiseSchedule(std::vector<double> etas, double kappa) : kappa_(kappa) {
  if (etas.empty()) throw ScheduleError("schedule needs at least one step");
  if (!(kappa >= 0.0) || !std::isfinite(kappa)) throw ScheduleError("kappa must be finite and >= 0");
  eta_.reserve(etas.size() + 1);
  for (double e : etas) {
    if (!std::isfinite(e) || !(e > eta_.back())) {
      throw ScheduleError("eta must be finite and strictly increasing from 0, got " + std::to_string(e) +
                          " after " + std::to_string(eta_.back()));
    }
    eta_.push_back(e);
  }
}

NoiseSchedule NoiseSchedule::geometric(Index steps, double eta_min, double eta_max, double kappa) {
  if (steps < 1) throw ScheduleError("schedule needs at least one step");
  if (steps == 1) return NoiseSchedule({eta_max}, kappa);
  if (!(eta_min > 0.0) || !(eta_max > eta_min)) {
    throw ScheduleError("geometric schedule needs 0 < eta_min < eta_max");
  }
  std::vector<double> etas(steps);
  const double ratio = eta_max / eta_min;
  for (Index t = 0; t < steps; ++t) {
    etas[t] = eta_min * std::pow(ratio, static_cast<double>(t) / static_cast<double>(steps - 1));
  }
  etas.back() = eta_max;
  return NoiseSchedule(std::move(etas), kappa);
}

NoiseSchedule NoiseSchedule::linear(Index steps, double eta_max, double kappa) {
  if (steps < 1) throw ScheduleError("schedule needs at least one step");
  std::vector<double> etas(steps);
  for (Index t = 0; t < steps; ++t) etas[t] = eta_max * static_cast<double>(t + 1) / static_cast<double>(steps);
  return NoiseSchedule(std::move(etas), kappa);
}

NoiseSchedule NoiseSchedule::single_step(double eta_q, double kappa) {
  return NoiseSchedule({eta_q}, kappa);
}

void NoiseSchedule::check_step(Index t) const {
  if (t < 1 || t > steps()) {
    throw ScheduleError("step " + std::to_string(t) + " outside [1, " + std::to_string(steps()) + "]");
  }
}

double NoiseSchedule::eta(Index t) const {
  if (t < 0 || t > steps()) throw ScheduleError("eta index " + std::to_string(t) + " out of range");
  return eta_[t];
}

double NoiseSchedule::alpha(Index t) const {
  check_step(t);
  return eta_[t] - eta_[t - 1];
}

void SingleStepParams::validate() const {
  if (!(eta_q > 0.0 && eta_q <= 1.0)) throw ScheduleError("eta_q must be in (0, 1], got " + std::to_string(eta_q));
  if (!(eta_p >= 0.0) || !std::isfinite(eta_p)) throw ScheduleError("eta_p must be finite and >= 0");
  if (!(kappa >= 0.0) || !std::isfinite(kappa)) throw ScheduleError("kappa must be finite and >= 0");
}

}  // namespace diffo
