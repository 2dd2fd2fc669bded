// Command-line front end: train, compress, decompress, calibrate, bench, synth.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <map>

#include "diffo/bench.hpp"
#include "diffo/codec.hpp"
#include "diffo/rate_modulation.hpp"
#include "diffo/training.hpp"

namespace fs = std::filesystem;
using namespace diffo;

namespace {

void warn(const std::string& msg) { std::cerr << "diffo: warning: " << msg << "\n"; }

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<Image> load_dir(const std::string& dir, std::size_t limit) {
  auto files = list_images(dir);
  if (limit > 0 && files.size() > limit) files.resize(limit);
  std::vector<Image> out;
  for (auto& loaded : load_images(files, warn)) out.push_back(std::move(loaded.image));
  if (out.empty()) throw ConfigError("no readable PNG images in " + dir);
  return out;
}

std::string stem(const std::string& path) { return fs::path(path).stem().string(); }

struct TrainArgs {
  std::string data, out, config, log;
  std::optional<long> iterations;
  std::optional<Index> batch, crop, downsample, codebook, width, latent, unet_width;
  std::optional<double> lr;
};

int run_train(const TrainArgs& a, std::uint64_t seed) {
  KeyValues kv = a.config.empty() ? KeyValues() : KeyValues::load(a.config);
  auto set_int = [&](const char* key, const auto& v) {
    if (v) kv.set(key, static_cast<std::int64_t>(*v));
  };
  set_int("iterations", a.iterations);
  set_int("batch_size", a.batch);
  set_int("crop_size", a.crop);
  set_int("downsample_factor", a.downsample);
  set_int("codebook_size", a.codebook);
  set_int("channel_width", a.width);
  set_int("latent_dim", a.latent);
  set_int("unet_base_width", a.unet_width);
  if (a.lr) kv.set("learning_rate", *a.lr);
  kv.set("seed", static_cast<std::int64_t>(seed));
  kv.set("train_seed", static_cast<std::int64_t>(seed));
  const ModelConfig mc = ModelConfig::from_kv(kv);
  TrainConfig tc = TrainConfig::from_kv(kv);
  FitOptions opt;
  opt.checkpoint_path = a.out;
  opt.log_path = a.log.empty() ? a.out + ".log.csv" : a.log;
  opt.warn = warn;
  opt.progress = [&](const StepMetrics& m) {
    if ((m.iteration + 1) % 50 == 0 || m.iteration + 1 == tc.iterations) {
      std::cerr << "iter " << m.iteration + 1 << "/" << tc.iterations << " loss " << m.total << " mse " << m.mse
                << " proxy " << m.perceptual << " bpp " << m.bpp_estimate << "\n";
    }
  };
  const FitResult r = fit(a.data, mc, tc, opt);
  std::cout << "checkpoint " << a.out << " model_hash " << hash_hex(r.model.hash()) << " train_images "
            << r.split.train.size() << " val_images " << r.split.val.size() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DiffO single-step diffusion image codec"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  std::string coder_name = "auto";

  auto* synth = app.add_subcommand("synth", "Write a procedural PNG corpus");
  std::string synth_out;
  int synth_count = 32;
  Index synth_size = 128;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--count", synth_count, "Number of images");
  synth->add_option("--size", synth_size, "Image side in pixels");
  synth->add_option("--seed", seed, "Random seed");

  auto* train = app.add_subcommand("train", "Train one rate point");
  TrainArgs ta;
  train->add_option("--data", ta.data, "Directory of PNG images")->required();
  train->add_option("--out", ta.out, "Checkpoint path")->required();
  train->add_option("--config", ta.config, "Key-value config file");
  train->add_option("--log", ta.log, "Training log CSV (default <out>.log.csv)");
  train->add_option("--iterations", ta.iterations);
  train->add_option("--batch-size", ta.batch);
  train->add_option("--crop", ta.crop, "Crop size in pixels");
  train->add_option("--lr", ta.lr, "Learning rate");
  train->add_option("--downsample", ta.downsample, "Downsample factor f");
  train->add_option("--codebook-size", ta.codebook, "Codebook size K");
  train->add_option("--channel-width", ta.width, "Autoencoder width");
  train->add_option("--latent-dim", ta.latent, "Latent channels d");
  train->add_option("--unet-width", ta.unet_width, "U-Net base width");
  train->add_option("--seed", seed, "Random seed");

  auto* comp = app.add_subcommand("compress", "Encode a PNG to a .dfo bitstream");
  std::string c_in, c_model, c_out, c_rate;
  std::optional<double> c_eta;
  bool c_inline = false;
  comp->add_option("input", c_in, "Input PNG")->required();
  comp->add_option("--model", c_model, "Checkpoint")->required();
  comp->add_option("--out", c_out, "Output .dfo")->required();
  comp->add_option("--eta", c_eta, "Noise scale eta_q in (0, 1]");
  comp->add_option("--rate-model", c_rate, "Rate model file from calibrate");
  comp->add_flag("--inline-pmf", c_inline, "Embed the PMF in the stream");
  comp->add_option("--coder", coder_name, "fast, reference or auto");
  comp->add_option("--seed", seed, "Random seed");

  auto* decomp = app.add_subcommand("decompress", "Decode a .dfo bitstream to PNG");
  std::string d_in, d_model, d_out;
  Index d_steps = 1;
  bool d_force = false;
  bool d_stochastic = false;
  double d_eta_p = 0.0;
  decomp->add_option("input", d_in, "Input .dfo")->required();
  decomp->add_option("--model", d_model, "Checkpoint")->required();
  decomp->add_option("--out", d_out, "Output PNG")->required();
  decomp->add_option("--steps", d_steps, "Denoising steps (0 = codebook latent only)");
  decomp->add_flag("--force", d_force, "Decode despite a model hash mismatch");
  decomp->add_flag("--stochastic", d_stochastic, "Sample the reverse noise");
  decomp->add_option("--eta-p", d_eta_p, "Reverse noise scale for --stochastic");
  decomp->add_option("--coder", coder_name, "fast, reference or auto");
  decomp->add_option("--seed", seed, "Random seed");

  auto* calib = app.add_subcommand("calibrate", "Sweep eta_q per rate point and fit eta = c / B");
  std::vector<std::string> cal_models;
  std::string cal_data, cal_out;
  std::vector<double> cal_grid = default_eta_grid();
  std::size_t cal_limit = 0;
  calib->add_option("--model", cal_models, "Checkpoints")->required();
  calib->add_option("--data", cal_data, "Validation PNG directory")->required();
  calib->add_option("--out", cal_out, "Output directory")->required();
  calib->add_option("--grid", cal_grid, "Eta values")->delimiter(',');
  calib->add_option("--max-images", cal_limit, "Use at most this many images");
  calib->add_option("--seed", seed, "Random seed");

  auto* bench = app.add_subcommand("bench", "Rate-distortion sweep, step ablation and timing");
  std::vector<std::string> b_models;
  std::string b_data, b_out, b_rate;
  std::vector<Index> b_steps{1, 15};
  int b_runs = 5;
  std::size_t b_limit = 0;
  bench->add_option("--model", b_models, "Checkpoints")->required();
  bench->add_option("--data", b_data, "PNG directory")->required();
  bench->add_option("--out", b_out, "Output directory")->required();
  bench->add_option("--steps", b_steps, "Step counts to time")->delimiter(',');
  bench->add_option("--runs", b_runs, "Timed runs per step count");
  bench->add_option("--rate-model", b_rate, "Rate model file from calibrate");
  bench->add_option("--max-images", b_limit, "Use at most this many images");
  bench->add_option("--coder", coder_name, "fast, reference or auto");
  bench->add_option("--seed", seed, "Random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "diffo: error: " << e.what() << "\n";
    return e.get_exit_code() == 0 ? 2 : e.get_exit_code();
  }

  try {
    const CoderKind coder_kind = parse_coder_kind(coder_name);
    if (*synth) {
      fs::create_directories(synth_out);
      for (int i = 0; i < synth_count; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "img_%04d.png", i);
        write_png((fs::path(synth_out) / name).string(), synthetic_image(synth_size, synth_size, seed * 100003 + i));
      }
      std::cout << "wrote " << synth_count << " images to " << synth_out << "\n";
      return 0;
    }
    if (*train) return run_train(ta, seed);
    if (*comp) {
      const Model<float> model = load_checkpoint(c_model);
      const Image img = read_png(c_in);
      std::optional<RateModel> rate;
      if (!c_rate.empty()) rate = load_rate_model(c_rate);
      auto coder = make_coder(coder_kind);
      CompressOptions opt;
      opt.eta = c_eta;
      opt.rate_model = rate ? &*rate : nullptr;
      opt.inline_pmf = c_inline;
      opt.coder = coder.get();
      const Compressed c = compress(img, model, opt);
      write_file(c_out, c.bytes);
      std::cout << "estimated_bpp " << c.report.estimated_bpp << " actual_bpp " << c.report.actual_bpp
                << " payload_bytes " << c.report.payload_bytes << " header_bytes " << c.report.header_bytes
                << " eta_q " << c.eta_q << " coder " << coder->name() << "\n";
      return 0;
    }
    if (*decomp) {
      const Model<float> model = load_checkpoint(d_model);
      auto coder = make_coder(coder_kind);
      DecompressOptions opt;
      opt.seed = seed;
      opt.steps = d_steps;
      opt.force = d_force;
      opt.mode = d_stochastic ? SampleMode::stochastic : SampleMode::deterministic;
      opt.eta_p = d_eta_p;
      opt.coder = coder.get();
      const Decompressed d = decompress(read_file(d_in), model, opt);
      write_png(d_out, d.image);
      std::cout << "decoded " << d.image.w() << "x" << d.image.h() << " eta_q " << d.header.eta_q << " steps "
                << d_steps << "\n";
      return 0;
    }
    if (*calib) {
      fs::create_directories(cal_out);
      const auto images = load_dir(cal_data, cal_limit);
      std::vector<CalibRow> rows;
      for (const auto& path : cal_models) {
        const Model<float> model = load_checkpoint(path);
        rows.push_back(calibrate_eta(model, images, cal_grid, seed));
        std::cout << stem(path) << " K " << rows.back().codebook_size << " bpp " << rows.back().bpp << " eta_star "
                  << rows.back().eta_star << "\n";
      }
      save_calibration((fs::path(cal_out) / "calibration.csv").string(), rows);
      std::vector<CalibRow> by_k = rows;
      std::sort(by_k.begin(), by_k.end(), [](const auto& a, const auto& b) { return a.codebook_size < b.codebook_size; });
      for (size_t i = 1; i < by_k.size(); ++i) {
        std::cout << "trend K " << by_k[i - 1].codebook_size << " -> " << by_k[i].codebook_size << ": eta_star "
                  << by_k[i - 1].eta_star << " -> " << by_k[i].eta_star << "\n";
      }
      if (rows.size() >= 2) {
        try {
          const RateModel rm = fit_rate_model(rows);
          save_rate_model((fs::path(cal_out) / "rate_model.kv").string(), rm);
          std::cout << "rate_model c " << rm.c << " eta_min " << rm.eta_min << " eta_max " << rm.eta_max << "\n";
        } catch (const CalibrationError& e) {
          warn(std::string("no rate model: ") + e.what());
        }
      }
      return 0;
    }
    if (*bench) {
      fs::create_directories(b_out);
      const auto images = load_dir(b_data, b_limit);
      std::vector<Model<float>> models;
      for (const auto& path : b_models) models.push_back(load_checkpoint(path));
      std::vector<NamedModel> named;
      for (size_t i = 0; i < models.size(); ++i) named.push_back({stem(b_models[i]), &models[i]});
      std::optional<RateModel> rate;
      if (!b_rate.empty()) rate = load_rate_model(b_rate);
      auto coder = make_coder(coder_kind);

      SweepOptions sweep;
      sweep.seed = seed;
      sweep.coder = coder.get();
      sweep.rate_model = rate ? &*rate : nullptr;
      const auto rd = rd_sweep(named, images, sweep);
      write_rd_csv((fs::path(b_out) / "rd.csv").string(), rd);

      std::vector<Index> ablation_steps{0, 1};
      for (Index s : b_steps) {
        if (std::find(ablation_steps.begin(), ablation_steps.end(), s) == ablation_steps.end()) ablation_steps.push_back(s);
      }
      std::vector<RdRow> ablation;
      std::map<Index, std::vector<RdRow>> by_steps;
      for (Index s : ablation_steps) {
        sweep.steps = s;
        auto rows = rd_sweep(named, images, sweep);
        by_steps[s] = rows;
        ablation.insert(ablation.end(), rows.begin(), rows.end());
      }
      write_ablation_csv((fs::path(b_out) / "ablation.csv").string(), ablation);

      const std::vector<std::pair<std::string, double RdRow::*>> metrics{
          {"psnr", &RdRow::psnr}, {"ms_ssim", &RdRow::ms_ssim}, {"proxy", &RdRow::proxy}};
      for (const auto& [metric, field] : metrics) {
        std::vector<PlotSeries> series;
        for (const auto& [s, rows] : by_steps) {
          PlotSeries ps{std::to_string(s) + "-step", {}};
          for (const auto& r : rows) ps.points.push_back({r.bpp_estimated, r.*field});
          series.push_back(std::move(ps));
        }
        std::ofstream((fs::path(b_out) / ("rd_" + metric + ".svg")).string())
            << rd_plot_svg("Rate-distortion (" + metric + ")", metric, series);
      }

      if (named.size() >= 3) {
        std::ofstream bd((fs::path(b_out) / "bd_rate.csv").string());
        bd << "anchor_steps,test_steps,metric,bd_rate_percent,quadratic_fallback\n";
        for (const auto& [s, rows] : by_steps) {
          if (s == 0) continue;
          for (const auto& [metric, field] : metrics) {
            std::vector<RdPoint> anchor, test;
            for (const auto& r : by_steps[0]) anchor.push_back({r.bpp_estimated, r.*field});
            for (const auto& r : rows) test.push_back({r.bpp_estimated, r.*field});
            try {
              const BdRate b = bd_rate(anchor, test);
              bd << 0 << ',' << s << ',' << metric << ',' << b.percent << ',' << b.quadratic_fallback << "\n";
            } catch (const ConfigError& e) {
              warn("BD-rate " + metric + " for " + std::to_string(s) + " steps: " + e.what());
            }
          }
        }
      }

      TimingOptions topt;
      topt.steps = b_steps;
      topt.runs = b_runs;
      topt.seed = seed;
      topt.coder = coder.get();
      std::vector<TimingRow> timing;
      for (const auto& nm : named) {
        const auto rows = time_codec(nm, images, topt);
        timing.insert(timing.end(), rows.begin(), rows.end());
      }
      write_timing_csv((fs::path(b_out) / "timing.csv").string(), timing);
      for (const auto& r : rd) {
        std::cout << r.rate_point << " bpp " << r.bpp_estimated << " psnr " << r.psnr << " proxy " << r.proxy << "\n";
      }
      for (const auto& t : timing) {
        std::cout << t.rate_point << " steps " << t.steps << " decode_s " << t.decode_s << "\n";
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "diffo: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
