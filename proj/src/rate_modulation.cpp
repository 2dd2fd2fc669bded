#include "diffo/rate_modulation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "diffo/codec.hpp"
#include "diffo/metrics.hpp"

namespace diffo {

void RateModel::validate() const {
  if (!(c > 0.0) || !std::isfinite(c)) throw CalibrationError("rate model constant must be positive");
  if (!(eta_min > 0.0 && eta_min < eta_max && eta_max <= 1.0)) {
    throw CalibrationError("rate model needs 0 < eta_min < eta_max <= 1");
  }
}

std::vector<double> default_eta_grid() { return {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95}; }

namespace {

void check_grid(const std::vector<double>& grid) {
  if (grid.empty()) throw CalibrationError("empty eta grid");
  for (size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] > 0.0 && grid[i] <= 1.0)) throw CalibrationError("eta grid values must lie in (0, 1]");
    if (i > 0 && !(grid[i] > grid[i - 1])) throw CalibrationError("eta grid must be strictly increasing");
  }
}

}  // namespace

double argmin_eta(const std::vector<double>& grid, const std::vector<double>& scores) {
  if (grid.empty() || grid.size() != scores.size()) throw CalibrationError("grid and scores differ in length");
  size_t best = 0;
  for (size_t i = 1; i < grid.size(); ++i) {
    if (scores[i] < scores[best] || (scores[i] == scores[best] && grid[i] < grid[best])) best = i;
  }
  return grid[best];
}

CalibRow calibrate_eta(const Model<float>& model, const std::vector<Image>& images, const std::vector<double>& grid,
                       std::uint64_t seed) {
  check_grid(grid);
  if (images.empty()) throw CalibrationError("empty validation set");
  const Index f = model.config().autoencoder.downsample_factor;
  std::vector<Image> inputs;
  for (const auto& img : images) inputs.push_back(crop_to_multiple(img, f));

  CalibRow row;
  row.codebook_size = model.config().codebook_size;
  row.grid = grid;
  const ModelHash hash = model.hash();
  for (double eta : grid) {
    double score = 0.0;
    double bpp = 0.0;
    for (const auto& img : inputs) {
      CompressOptions copt;
      copt.eta = eta;
      copt.model_hash = hash;
      const Compressed c = compress(img, model, copt);
      DecompressOptions dopt;
      dopt.seed = seed;
      dopt.model_hash = hash;
      const Decompressed d = decompress(c.bytes, model, dopt);
      score += perceptual_distance(img, d.image);
      bpp += c.report.estimated_bpp;
    }
    row.scores.push_back(score / static_cast<double>(inputs.size()));
    row.bpp = bpp / static_cast<double>(inputs.size());
  }
  row.eta_star = argmin_eta(row.grid, row.scores);
  return row;
}

RateModel fit_rate_model(const std::vector<CalibRow>& rows) {
  if (rows.size() < 2) throw CalibrationError("rate model fit needs at least 2 calibration rows");
  double sum = 0.0;
  double lo = 1.0;
  double hi = 0.0;
  bool distinct = false;
  for (const auto& r : rows) {
    if (!(r.bpp > 0.0) || !(r.eta_star > 0.0)) throw CalibrationError("calibration rows need positive bpp and eta_star");
    sum += std::log(r.eta_star) + std::log(r.bpp);
    if (r.bpp != rows.front().bpp) distinct = true;
    const double row_lo = r.grid.empty() ? r.eta_star : r.grid.front();
    const double row_hi = r.grid.empty() ? r.eta_star : r.grid.back();
    lo = std::min(lo, row_lo);
    hi = std::max(hi, row_hi);
  }
  if (!distinct) throw CalibrationError("rate model fit needs rows with distinct bpp");
  RateModel m{std::exp(sum / static_cast<double>(rows.size())), lo, hi};
  m.validate();
  return m;
}

double select_eta(double bpp, const RateModel& model) {
  if (!(bpp > 0.0) || !std::isfinite(bpp)) throw ConfigError("select_eta needs a positive bpp");
  return std::clamp(model.c / bpp, model.eta_min, model.eta_max);
}

void save_calibration(const std::string& path, const std::vector<CalibRow>& rows) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << "codebook_size,bpp,eta,score,eta_star\n";
  out.precision(17);
  for (const auto& r : rows) {
    for (size_t i = 0; i < r.grid.size(); ++i) {
      out << r.codebook_size << ',' << r.bpp << ',' << r.grid[i] << ',' << r.scores[i] << ',' << r.eta_star << '\n';
    }
  }
}

std::vector<CalibRow> load_calibration(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::string line;
  std::getline(in, line);
  std::vector<CalibRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string cell;
    std::vector<double> v;
    while (std::getline(fields, cell, ',')) v.push_back(std::stod(cell));
    if (v.size() != 5) throw FormatError(path + ": expected 5 columns");
    const auto k = static_cast<Index>(v[0]);
    if (rows.empty() || rows.back().codebook_size != k || rows.back().bpp != v[1]) {
      rows.push_back({k, v[1], {}, {}, v[4]});
    }
    rows.back().grid.push_back(v[2]);
    rows.back().scores.push_back(v[3]);
  }
  return rows;
}

void save_rate_model(const std::string& path, const RateModel& model) {
  KeyValues kv;
  kv.set("c", model.c);
  kv.set("eta_min", model.eta_min);
  kv.set("eta_max", model.eta_max);
  kv.save(path);
}

RateModel load_rate_model(const std::string& path) {
  const KeyValues kv = KeyValues::load(path);
  RateModel m{kv.get_double("c"), kv.get_double("eta_min"), kv.get_double("eta_max")};
  m.validate();
  return m;
}

}  // namespace diffo
