#include "diffo/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include "diffo/diffusion.hpp"

namespace diffo {

void LossWeights::validate() const {
  if (!(lambda >= 0.0) || !(beta >= 0.0)) throw ConfigError("loss weights must be >= 0");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
  if (iterations < 0) throw ConfigError("iterations must be >= 0");
  if (crop_size < 1) throw ConfigError("crop_size must be >= 1");
  if (!(eta_small > 0.0 && eta_small < eta_large && eta_large <= 1.0)) {
    throw ConfigError("need 0 < eta_small < eta_large <= 1");
  }
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must be in [0, 1)");
}

KeyValues TrainConfig::to_kv() const {
  KeyValues kv;
  kv.set("batch_size", static_cast<std::int64_t>(batch_size));
  kv.set("learning_rate", learning_rate);
  kv.set("iterations", static_cast<std::int64_t>(iterations));
  kv.set("crop_size", static_cast<std::int64_t>(crop_size));
  kv.set("eta_small", eta_small);
  kv.set("eta_large", eta_large);
  kv.set("lambda", lambda);
  kv.set("weight_decay", weight_decay);
  kv.set("val_fraction", val_fraction);
  kv.set("checkpoint_every", static_cast<std::int64_t>(checkpoint_every));
  kv.set("train_seed", static_cast<std::int64_t>(seed));
  return kv;
}

TrainConfig TrainConfig::from_kv(const KeyValues& kv) {
  TrainConfig c;
  c.batch_size = kv.get_int("batch_size", c.batch_size);
  c.learning_rate = kv.get_double("learning_rate", c.learning_rate);
  c.iterations = kv.get_int("iterations", c.iterations);
  c.crop_size = kv.get_int("crop_size", c.crop_size);
  c.eta_small = kv.get_double("eta_small", c.eta_small);
  c.eta_large = kv.get_double("eta_large", c.eta_large);
  c.lambda = kv.get_double("lambda", c.lambda);
  c.weight_decay = kv.get_double("weight_decay", c.weight_decay);
  c.val_fraction = kv.get_double("val_fraction", c.val_fraction);
  c.checkpoint_every = kv.get_int("checkpoint_every", c.checkpoint_every);
  c.seed = static_cast<std::uint64_t>(kv.get_int("train_seed", static_cast<std::int64_t>(c.seed)));
  c.validate();
  return c;
}

template <typename Scalar>
LossTerms<Scalar> total_loss(const Var<Scalar>& image, const Var<Scalar>& recon, const Var<Scalar>& x,
                             const Var<Scalar>& y, const LossWeights& weights) {
  weights.validate();
  LossTerms<Scalar> out;
  out.mse = mse(recon, image);
  const auto& proxy = perceptual_proxy_model<Scalar>();
  if (weights.lambda > 0.0) {
    out.perceptual = proxy.distance(recon, image);
  } else {
    NoGradGuard guard;
    out.perceptual = proxy.distance(recon, image);
  }
  const VqLoss<Scalar> vq = vq_loss_terms(x, y, static_cast<Scalar>(weights.beta));
  out.embed = vq.embed;
  out.commit = vq.commit;
  Var<Scalar> total = out.mse + vq.embed + vq.commit;
  if (weights.lambda > 0.0) total = total + static_cast<Scalar>(weights.lambda) * out.perceptual;
  out.total = total;
  return out;
}

StepChoice sample_training_step(long, const TrainConfig& config, Rng& rng) {
  std::bernoulli_distribution coin(0.5);
  return coin(rng) ? StepChoice{2, config.eta_large} : StepChoice{1, config.eta_small};
}

template <typename Scalar>
TrainingForward<Scalar> training_forward(const Model<Scalar>& model, const Tensor<Scalar>& images,
                                         const StepChoice& step, Rng& rng) {
  TrainingForward<Scalar> f;
  const Var<Scalar> input = constant(images);
  f.x = model.encoder()(input);
  Quantized<Scalar> q = quantize(f.x.value(), model.codebook());
  f.indices = std::move(q.indices);
  f.y = embed(f.indices, model.codebook());
  const Var<Scalar> y_st = straight_through(f.x, f.y);
  const double sigma = model.config().kappa * std::sqrt(step.eta);
  const Var<Scalar> noise = constant(add_noise(Tensor<Scalar>::zeros(f.x.shape()), sigma, rng));
  f.x_tilde = f.x + static_cast<Scalar>(step.eta) * (y_st - f.x) + noise;
  f.x_hat = model.unet()(f.x_tilde, y_st, step.t);
  f.recon = model.decoder()(f.x_hat);
  return f;
}

namespace {

template <typename Scalar>
bool all_zero(const Tensor<Scalar>& t) {
  return (t.array() == Scalar(0)).all();
}

bool no_decay_name(const std::string& name) {
  auto ends_with = [&](const std::string& suffix) {
    return name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  return ends_with(".bias") || ends_with(".gamma") || ends_with(".beta") || ends_with(".entries");
}

}  // namespace

template <typename Scalar>
Trainer<Scalar>::Trainer(Model<Scalar>& model, TrainConfig config)
    : model_(model),
      config_(std::move(config)),
      params_(model.params()),
      optimizer_(params_, {.weight_decay = config_.weight_decay}),
      rng_(config_.seed),
      histogram_(model.config().codebook_size, 0) {
  config_.validate();
  std::vector<std::string> exempt;
  for (const auto& [name, p] : params_) {
    if (no_decay_name(name)) exempt.push_back(name);
  }
  optimizer_.set_no_decay(std::move(exempt));
}

template <typename Scalar>
Tensor<Scalar> Trainer<Scalar>::sample_batch(const std::vector<Tensor<Scalar>>& images) {
  if (images.empty()) throw ConfigError("no training images");
  const Index crop_size = config_.crop_size;
  std::vector<Tensor<Scalar>> crops;
  for (Index b = 0; b < config_.batch_size; ++b) {
    const auto& img = images[std::uniform_int_distribution<size_t>(0, images.size() - 1)(rng_)];
    if (img.h() < crop_size || img.w() < crop_size) {
      throw ShapeError("training image " + img.shape().str() + " smaller than the crop size");
    }
    const Index top = std::uniform_int_distribution<Index>(0, img.h() - crop_size)(rng_);
    const Index left = std::uniform_int_distribution<Index>(0, img.w() - crop_size)(rng_);
    Tensor<Scalar> out({1, img.c(), crop_size, crop_size});
    for (Index c = 0; c < img.c(); ++c) {
      for (Index y = 0; y < crop_size; ++y) {
        for (Index x = 0; x < crop_size; ++x) out(0, c, y, x) = img(0, c, top + y, left + x);
      }
    }
    crops.push_back(std::move(out));
  }
  return concat_batch(crops);
}

template <typename Scalar>
StepMetrics Trainer<Scalar>::train_step(const Tensor<Scalar>& batch) {
  if (all_zero(model_.codebook().entries().value())) {
    model_.codebook().init_from_latents(model_.encoder().encode(batch), rng_);
  }
  const StepChoice step = sample_training_step(iteration_, config_, rng_);
  const TrainingForward<Scalar> f = training_forward(model_, batch, step, rng_);
  const LossTerms<Scalar> loss =
      total_loss(constant(batch), f.recon, f.x, f.y, LossWeights{config_.lambda, model_.config().beta});

  StepMetrics m;
  m.iteration = iteration_;
  m.t = step.t;
  m.eta = step.eta;
  m.total = item(loss.total);
  m.mse = item(loss.mse);
  m.perceptual = item(loss.perceptual);
  m.embed = item(loss.embed);
  m.commit = item(loss.commit);
  if (!std::isfinite(m.total)) {
    std::ostringstream msg;
    msg << "non-finite loss at iteration " << iteration_ << " (t=" << step.t << " mse=" << m.mse
        << " perceptual=" << m.perceptual << " embed=" << m.embed << " commit=" << m.commit << ")";
    throw TrainingError(msg.str());
  }

  optimizer_.zero_grad();
  loss.total.backward();
  optimizer_.step(config_.learning_rate);
  ++iteration_;

  m.code_histogram = code_histogram(f.indices, model_.config().codebook_size);
  for (size_t k = 0; k < histogram_.size(); ++k) histogram_[k] += m.code_histogram[k];
  const double pixels = static_cast<double>(batch.n() * batch.h() * batch.w());
  m.bpp_estimate = estimate_bits(f.indices.q, build_pmf(histogram_)) / pixels;
  return m;
}

namespace {

constexpr char kStateMagic[8] = {'D', 'F', 'O', 'T', 'R', 'N', 'R', '1'};

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in, const std::string& path) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw CorruptionError("trainer state " + path + " is truncated");
  return v;
}

}  // namespace

template <typename Scalar>
void Trainer<Scalar>::save_state(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write trainer state " + path);
  out.write(kStateMagic, sizeof kStateMagic);
  put<std::uint32_t>(out, sizeof(Scalar));
  put<std::int64_t>(out, iteration_);
  put<std::int64_t>(out, optimizer_.steps());
  std::ostringstream rng_text;
  rng_text << rng_;
  const std::string r = rng_text.str();
  put<std::uint64_t>(out, r.size());
  out.write(r.data(), static_cast<std::streamsize>(r.size()));
  put<std::uint64_t>(out, histogram_.size());
  for (std::uint64_t h : histogram_) put(out, h);
  auto& opt = const_cast<AdamW<Scalar>&>(optimizer_);
  for (auto* moments : {&opt.first_moments(), &opt.second_moments()}) {
    put<std::uint64_t>(out, moments->size());
    for (const auto& t : *moments) {
      put<std::uint64_t>(out, static_cast<std::uint64_t>(t.size()));
      out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(Scalar)));
    }
  }
  if (!out) throw ConfigError("failed writing trainer state " + path);
}

template <typename Scalar>
void Trainer<Scalar>::load_state(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open trainer state " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || !std::equal(magic, magic + 8, kStateMagic)) throw FormatError(path + " is not a trainer state file");
  if (get<std::uint32_t>(in, path) != sizeof(Scalar)) throw FormatError("trainer state scalar width mismatch");
  iteration_ = get<std::int64_t>(in, path);
  optimizer_.set_steps(get<std::int64_t>(in, path));
  std::string r(get<std::uint64_t>(in, path), '\0');
  in.read(r.data(), static_cast<std::streamsize>(r.size()));
  std::istringstream(r) >> rng_;
  if (get<std::uint64_t>(in, path) != histogram_.size()) throw CorruptionError("trainer state histogram size mismatch");
  for (auto& h : histogram_) h = get<std::uint64_t>(in, path);
  for (auto* moments : {&optimizer_.first_moments(), &optimizer_.second_moments()}) {
    if (get<std::uint64_t>(in, path) != moments->size()) throw CorruptionError("trainer state tensor count mismatch");
    for (auto& t : *moments) {
      if (get<std::uint64_t>(in, path) != static_cast<std::uint64_t>(t.size())) {
        throw CorruptionError("trainer state tensor size mismatch");
      }
      in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(Scalar)));
    }
  }
  if (!in) throw CorruptionError("trainer state " + path + " is truncated");
}

DatasetSplit split_dataset(std::vector<std::string> files, double val_fraction, std::uint64_t seed) {
  std::sort(files.begin(), files.end());
  Rng rng(seed);
  std::shuffle(files.begin(), files.end(), rng);
  std::size_t n_val = 0;
  if (files.size() >= 2 && val_fraction > 0.0) {
    n_val = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(val_fraction * files.size())), 1,
                                    files.size() - 1);
  }
  DatasetSplit split;
  split.val.assign(files.begin(), files.begin() + static_cast<std::ptrdiff_t>(n_val));
  split.train.assign(files.begin() + static_cast<std::ptrdiff_t>(n_val), files.end());
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.train.begin(), split.train.end());
  return split;
}

template <typename Scalar>
std::vector<std::uint64_t> dataset_histogram(const Model<Scalar>& model, const std::vector<Tensor<Scalar>>& images) {
  std::vector<std::uint64_t> hist(model.config().codebook_size, 0);
  const Index f = model.config().autoencoder.downsample_factor;
  for (const auto& img : images) {
    const Tensor<Scalar> cropped = img.h() % f == 0 && img.w() % f == 0
                                       ? img
                                       : crop_to_multiple(img.template cast<float>(), f).template cast<Scalar>();
    const auto q = quantize(model.encoder().encode(cropped), model.codebook());
    const auto h = code_histogram(q.indices, model.config().codebook_size);
    for (size_t k = 0; k < hist.size(); ++k) hist[k] += h[k];
  }
  return hist;
}

std::string training_log_header() { return "iteration,t,eta,total,mse,perceptual,embed,commit,bpp_estimate"; }

std::string training_log_row(const StepMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%ld,%ld,%.6g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g", m.iteration, static_cast<long>(m.t),
                m.eta, m.total, m.mse, m.perceptual, m.embed, m.commit, m.bpp_estimate);
  return buf;
}

FitResult fit(const std::string& dataset_dir, const ModelConfig& model_config, const TrainConfig& config,
              const FitOptions& options) {
  config.validate();
  const auto warn = [&](const std::string& msg) {
    if (options.warn) options.warn(msg);
  };
  const auto files = list_images(dataset_dir);
  if (files.empty()) throw ConfigError("no PNG images in " + dataset_dir);
  FitResult result{Model<float>(model_config), split_dataset(files, config.val_fraction, config.seed)};

  std::vector<Image> train;
  for (auto& loaded : load_images(result.split.train, warn)) {
    if (loaded.image.h() < config.crop_size || loaded.image.w() < config.crop_size) {
      warn("skipping " + loaded.path + ": smaller than the " + std::to_string(config.crop_size) + "-pixel crop");
      continue;
    }
    train.push_back(std::move(loaded.image));
  }
  if (train.empty()) throw ConfigError("no usable training images in " + dataset_dir);

  Model<float>& model = result.model;
  Trainer<float> trainer(model, config);
  std::ofstream log;
  if (!options.log_path.empty()) {
    log.open(options.log_path);
    if (!log) throw ConfigError("cannot write training log " + options.log_path);
    log << training_log_header() << "\n";
  }
  auto checkpoint = [&] {
    if (options.checkpoint_path.empty()) return;
    save_checkpoint(options.checkpoint_path, model);
    trainer.save_state(options.checkpoint_path + ".state");
  };
  while (trainer.iteration() < config.iterations) {
    const StepMetrics m = trainer.train_step(trainer.sample_batch(train));
    if (log.is_open()) log << training_log_row(m) << "\n";
    if (options.progress) options.progress(m);
    if (config.checkpoint_every > 0 && trainer.iteration() % config.checkpoint_every == 0) checkpoint();
  }
  model.set_pmf(build_pmf(dataset_histogram(model, train)));
  checkpoint();
  return result;
}

#define DIFFO_INSTANTIATE_TRAINING(S)                                                                       \
  template LossTerms<S> total_loss(const Var<S>&, const Var<S>&, const Var<S>&, const Var<S>&,              \
                                   const LossWeights&);                                                     \
  template TrainingForward<S> training_forward(const Model<S>&, const Tensor<S>&, const StepChoice&, Rng&); \
  template class Trainer<S>;                                                                                \
  template std::vector<std::uint64_t> dataset_histogram(const Model<S>&, const std::vector<Tensor<S>>&);

DIFFO_INSTANTIATE_TRAINING(float)
DIFFO_INSTANTIATE_TRAINING(double)

}  // namespace diffo
