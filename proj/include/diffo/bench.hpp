#pragma once

#include <string>
#include <vector>

#include "diffo/codec.hpp"
#include "diffo/metrics.hpp"

namespace diffo {

struct NamedModel {
  std::string name;
  const Model<float>* model = nullptr;
};

/// Mean quality of one rate point over an image set. ms_ssim is NaN when the
/// images are too small for it.
struct RdRow {
  std::string rate_point;
  Index steps = 1;
  double bpp_estimated = 0.0;
  double bpp_actual = 0.0;
  double psnr = 0.0;
  double ms_ssim = 0.0;
  double proxy = 0.0;
};

struct SweepOptions {
  Index steps = 1;
  std::uint64_t seed = 0;
  CoderBackend* coder = nullptr;
  const RateModel* rate_model = nullptr;
};

/// Compress/decompress every image with every model; rows sorted by bpp.
std::vector<RdRow> rd_sweep(const std::vector<NamedModel>& models, const std::vector<Image>& images,
                            const SweepOptions& options);

struct TimingRow {
  std::string rate_point;
  Index steps = 0;
  /// Median over runs of the mean per-image wall time, seconds.
  double encode_s = 0.0;
  double decode_s = 0.0;
};

struct TimingOptions {
  std::vector<Index> steps{1, 15};
  int runs = 5;
  int warmup = 1;
  std::uint64_t seed = 0;
  CoderBackend* coder = nullptr;
};

/// Codec-path wall time (no file IO), one row per step count.
std::vector<TimingRow> time_codec(const NamedModel& model, const std::vector<Image>& images,
                                  const TimingOptions& options);

double median(std::vector<double> values);

void write_rd_csv(const std::string& path, const std::vector<RdRow>& rows);
/// Like write_rd_csv with a steps column, for step-count ablations.
void write_ablation_csv(const std::string& path, const std::vector<RdRow>& rows);
void write_timing_csv(const std::string& path, const std::vector<TimingRow>& rows);

struct PlotSeries {
  std::string label;
  std::vector<RdPoint> points;
};

/// Line plot of metric against bpp as a standalone SVG document.
std::string rd_plot_svg(const std::string& title, const std::string& metric, const std::vector<PlotSeries>& series);

}  // namespace diffo
