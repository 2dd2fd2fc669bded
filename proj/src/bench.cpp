#include "diffo/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace diffo {

std::vector<RdRow> rd_sweep(const std::vector<NamedModel>& models, const std::vector<Image>& images,
                            const SweepOptions& options) {
  if (models.empty()) throw ConfigError("rd_sweep needs at least one model");
  if (images.empty()) throw ConfigError("rd_sweep needs at least one image");
  std::vector<RdRow> rows;
  for (const auto& nm : models) {
    const Model<float>& model = *nm.model;
    const Index f = model.config().autoencoder.downsample_factor;
    const ModelHash hash = model.hash();
    RdRow row;
    row.rate_point = nm.name;
    row.steps = options.steps;
    bool ms_ok = true;
    for (const auto& original : images) {
      const Image img = crop_to_multiple(original, f);
      CompressOptions copt;
      copt.rate_model = options.rate_model;
      copt.coder = options.coder;
      copt.model_hash = hash;
      const Compressed c = compress(img, model, copt);
      DecompressOptions dopt;
      dopt.seed = options.seed;
      dopt.steps = options.steps;
      dopt.coder = options.coder;
      dopt.model_hash = hash;
      const Decompressed d = decompress(c.bytes, model, dopt);
      row.bpp_estimated += c.report.estimated_bpp;
      row.bpp_actual += c.report.actual_bpp;
      row.psnr += psnr(img, d.image);
      row.proxy += perceptual_distance(img, d.image);
      if (ms_ok) {
        try {
          row.ms_ssim += ms_ssim(img, d.image);
        } catch (const ShapeError&) {
          ms_ok = false;
        }
      }
    }
    const double n = static_cast<double>(images.size());
    row.bpp_estimated /= n;
    row.bpp_actual /= n;
    row.psnr /= n;
    row.proxy /= n;
    row.ms_ssim = ms_ok ? row.ms_ssim / n : std::numeric_limits<double>::quiet_NaN();
    rows.push_back(row);
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const RdRow& a, const RdRow& b) { return a.bpp_estimated < b.bpp_estimated; });
  return rows;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ConfigError("median of an empty set");
  std::sort(values.begin(), values.end());
  const size_t m = values.size() / 2;
  return values.size() % 2 ? values[m] : 0.5 * (values[m - 1] + values[m]);
}

std::vector<TimingRow> time_codec(const NamedModel& nm, const std::vector<Image>& images,
                                  const TimingOptions& options) {
  if (images.empty()) throw ConfigError("time_codec needs at least one image");
  if (options.runs < 1) throw ConfigError("time_codec needs at least one run");
  using clock = std::chrono::steady_clock;
  const Model<float>& model = *nm.model;
  const Index f = model.config().autoencoder.downsample_factor;
  const ModelHash hash = model.hash();
  std::vector<Image> inputs;
  for (const auto& img : images) inputs.push_back(crop_to_multiple(img, f));

  std::vector<TimingRow> rows;
  for (Index steps : options.steps) {
    std::vector<double> enc_times, dec_times;
    for (int run = -options.warmup; run < options.runs; ++run) {
      double enc = 0.0;
      double dec = 0.0;
      for (const auto& img : inputs) {
        CompressOptions copt;
        copt.coder = options.coder;
        copt.model_hash = hash;
        const auto t0 = clock::now();
        const Compressed c = compress(img, model, copt);
        const auto t1 = clock::now();
        DecompressOptions dopt;
        dopt.seed = options.seed;
        dopt.steps = steps;
        dopt.coder = options.coder;
        dopt.model_hash = hash;
        const Decompressed d = decompress(c.bytes, model, dopt);
        const auto t2 = clock::now();
        enc += std::chrono::duration<double>(t1 - t0).count();
        dec += std::chrono::duration<double>(t2 - t1).count();
      }
      if (run < 0) continue;
      enc_times.push_back(enc / static_cast<double>(inputs.size()));
      dec_times.push_back(dec / static_cast<double>(inputs.size()));
    }
    rows.push_back({nm.name, steps, median(enc_times), median(dec_times)});
  }
  return rows;
}

namespace {

std::ofstream open_csv(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out.precision(10);
  return out;
}

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

void write_rd_csv(const std::string& path, const std::vector<RdRow>& rows) {
  auto out = open_csv(path);
  out << "rate_point,bpp_estimated,bpp_actual,psnr,ms_ssim,proxy\n";
  for (const auto& r : rows) {
    out << r.rate_point << ',' << num(r.bpp_estimated) << ',' << num(r.bpp_actual) << ',' << num(r.psnr) << ','
        << num(r.ms_ssim) << ',' << num(r.proxy) << '\n';
  }
}

void write_ablation_csv(const std::string& path, const std::vector<RdRow>& rows) {
  auto out = open_csv(path);
  out << "rate_point,steps,bpp_estimated,bpp_actual,psnr,ms_ssim,proxy\n";
  for (const auto& r : rows) {
    out << r.rate_point << ',' << r.steps << ',' << num(r.bpp_estimated) << ',' << num(r.bpp_actual) << ','
        << num(r.psnr) << ',' << num(r.ms_ssim) << ',' << num(r.proxy) << '\n';
  }
}

void write_timing_csv(const std::string& path, const std::vector<TimingRow>& rows) {
  auto out = open_csv(path);
  out << "rate_point,steps,encode_s,decode_s\n";
  for (const auto& r : rows) out << r.rate_point << ',' << r.steps << ',' << num(r.encode_s) << ',' << num(r.decode_s) << '\n';
}

std::string rd_plot_svg(const std::string& title, const std::string& metric, const std::vector<PlotSeries>& series) {
  constexpr double kW = 640, kH = 420, kLeft = 70, kRight = 20, kTop = 40, kBottom = 50;
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    for (const auto& p : s.points) {
      if (!std::isfinite(p.metric)) continue;
      x0 = std::min(x0, p.bpp);
      x1 = std::max(x1, p.bpp);
      y0 = std::min(y0, p.metric);
      y1 = std::max(y1, p.metric);
    }
  }
  if (!(x1 >= x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x0 -= 0.5 * std::abs(x0) + 1e-3, x1 += 0.5 * std::abs(x1) + 1e-3;
  if (y1 == y0) y0 -= 0.5 * std::abs(y0) + 1e-3, y1 += 0.5 * std::abs(y1) + 1e-3;
  auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * (kW - kLeft - kRight); };
  auto py = [&](double y) { return kH - kBottom - (y - y0) / (y1 - y0) * (kH - kTop - kBottom); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << kW / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n"
      << "<line x1=\"" << kLeft << "\" y1=\"" << kH - kBottom << "\" x2=\"" << kW - kRight << "\" y2=\"" << kH - kBottom
      << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kH - kBottom
      << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4.0;
    const double yv = y0 + (y1 - y0) * i / 4.0;
    svg << "<text x=\"" << px(xv) << "\" y=\"" << kH - kBottom + 16 << "\" text-anchor=\"middle\">" << num(xv)
        << "</text>\n";
    svg << "<text x=\"" << kLeft - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << num(yv) << "</text>\n";
  }
  svg << "<text x=\"" << kW / 2 << "\" y=\"" << kH - 12 << "\" text-anchor=\"middle\">bpp</text>\n"
      << "<text x=\"16\" y=\"" << kH / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << kH / 2 << ")\">"
      << metric << "</text>\n";
  for (size_t i = 0; i < series.size(); ++i) {
    const char* color = colors[i % 6];
    std::ostringstream pts;
    for (const auto& p : series[i].points) {
      if (std::isfinite(p.metric)) pts << px(p.bpp) << ',' << py(p.metric) << ' ';
    }
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"" << pts.str() << "\"/>\n";
    for (const auto& p : series[i].points) {
      if (!std::isfinite(p.metric)) continue;
      svg << "<circle cx=\"" << px(p.bpp) << "\" cy=\"" << py(p.metric) << "\" r=\"3.5\" fill=\"" << color << "\"/>\n";
    }
    svg << "<text x=\"" << kW - kRight - 140 << "\" y=\"" << kTop + 16 * (i + 1) << "\" fill=\"" << color << "\">"
        << series[i].label << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace diffo
