#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diffo/image_io.hpp"
#include "diffo/model.hpp"

namespace diffo {

/// One calibrated rate point.
struct CalibRow {
  Index codebook_size = 0;
  /// Mean estimated bpp of the validation images.
  double bpp = 0.0;
  std::vector<double> grid;
  /// Mean perceptual proxy per grid value.
  std::vector<double> scores;
  double eta_star = 0.0;

  bool operator==(const CalibRow&) const = default;
};

/// eta = clamp(c / B, eta_min, eta_max).
struct RateModel {
  double c = 0.0;
  double eta_min = 0.0;
  double eta_max = 1.0;

  void validate() const;
};

std::vector<double> default_eta_grid();

/// Grid value with the lowest score; ties go to the smallest eta.
double argmin_eta(const std::vector<double>& grid, const std::vector<double>& scores);

/// Runs compress -> decompress for every grid value and records the mean
/// perceptual proxy against the originals.
CalibRow calibrate_eta(const Model<float>& model, const std::vector<Image>& images, const std::vector<double>& grid,
                       std::uint64_t seed);

/// Least squares in log space: log c = mean(log eta_star + log B). Bounds are
/// the extremes of the calibration grids. Needs two rows with distinct B.
RateModel fit_rate_model(const std::vector<CalibRow>& rows);

double select_eta(double bpp, const RateModel& model);

/// CSV: codebook_size,bpp,eta,score,eta_star (one line per grid value).
void save_calibration(const std::string& path, const std::vector<CalibRow>& rows);
std::vector<CalibRow> load_calibration(const std::string& path);
void save_rate_model(const std::string& path, const RateModel& model);
RateModel load_rate_model(const std::string& path);

}  // namespace diffo
