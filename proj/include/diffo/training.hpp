#pragma once

#include <functional>
#include <string>
#include <vector>

#include "diffo/image_io.hpp"
#include "diffo/model.hpp"
#include "diffo/perceptual.hpp"

namespace diffo {

struct LossWeights {
  /// Perceptual-proxy weight.
  double lambda = 1.0;
  /// Commitment weight.
  double beta = 0.25;

  void validate() const;
};

struct TrainConfig {
  Index batch_size = 4;
  double learning_rate = 1e-4;
  long iterations = 2000;
  Index crop_size = 64;
  double eta_small = 0.05;
  double eta_large = 0.9;
  double lambda = 1.0;
  double weight_decay = 0.0;
  /// Fraction of the corpus held out for validation.
  double val_fraction = 0.2;
  /// Checkpoint every n iterations (0: only at the end).
  long checkpoint_every = 0;
  std::uint64_t seed = 0;

  void validate() const;
  KeyValues to_kv() const;
  static TrainConfig from_kv(const KeyValues& kv);
};

template <typename Scalar>
struct LossTerms {
  Var<Scalar> total;
  Var<Scalar> mse;
  Var<Scalar> perceptual;
  Var<Scalar> embed;
  Var<Scalar> commit;
};

/// L = mse(X, X_hat) + lambda * proxy(X, X_hat) + mean((sg(x) - y)^2) + beta * mean((sg(y) - x)^2).
/// y must route its gradient to the codebook (see embed()).
template <typename Scalar>
LossTerms<Scalar> total_loss(const Var<Scalar>& image, const Var<Scalar>& recon, const Var<Scalar>& x,
                             const Var<Scalar>& y, const LossWeights& weights);

struct StepChoice {
  /// 1: distortion-robust step (eta_small), 2: perceptual step (eta_large).
  Index t = 2;
  double eta = 0.0;
};

/// Uniform draw of which of the two training steps to take.
StepChoice sample_training_step(long iteration, const TrainConfig& config, Rng& rng);

struct StepMetrics {
  long iteration = 0;
  Index t = 0;
  double eta = 0.0;
  double total = 0.0;
  double mse = 0.0;
  double perceptual = 0.0;
  double embed = 0.0;
  double commit = 0.0;
  /// Rate of this batch under a PMF of all indices seen so far.
  double bpp_estimate = 0.0;
  std::vector<std::uint64_t> code_histogram;
};

/// Forward pass of one training iteration: encode, quantize, noise the latent
/// toward the code, denoise with the fusion U-Net and decode.
template <typename Scalar>
struct TrainingForward {
  Var<Scalar> x;
  Var<Scalar> y;
  Var<Scalar> x_tilde;
  Var<Scalar> x_hat;
  Var<Scalar> recon;
  IndexGrid indices;
};

template <typename Scalar>
TrainingForward<Scalar> training_forward(const Model<Scalar>& model, const Tensor<Scalar>& images,
                                         const StepChoice& step, Rng& rng);

/// Single-writer optimization loop state: model, AdamW moments, RNG and the
/// running index histogram. save_state/load_state resume bit-exactly.
template <typename Scalar>
class Trainer {
 public:
  Trainer(Model<Scalar>& model, TrainConfig config);

  /// One update over every trainable tensor; throws TrainingError on a non-finite loss.
  StepMetrics train_step(const Tensor<Scalar>& batch);
  /// Random crops for the next step, drawn from the trainer RNG.
  Tensor<Scalar> sample_batch(const std::vector<Tensor<Scalar>>& images);

  long iteration() const { return iteration_; }
  Rng& rng() { return rng_; }
  const TrainConfig& config() const { return config_; }
  const std::vector<std::uint64_t>& running_histogram() const { return histogram_; }

  void save_state(const std::string& path) const;
  void load_state(const std::string& path);

 private:
  Model<Scalar>& model_;
  TrainConfig config_;
  ParamList<Scalar> params_;
  AdamW<Scalar> optimizer_;
  Rng rng_;
  long iteration_ = 0;
  bool codebook_ready_ = false;
  std::vector<std::uint64_t> histogram_;
};

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> val;
};

/// Seeded shuffle of the sorted list, then the first val_fraction (at least
/// one file when there are two or more) goes to validation.
DatasetSplit split_dataset(std::vector<std::string> files, double val_fraction, std::uint64_t seed);

/// Index histogram over whole images (cropped to multiples of f).
template <typename Scalar>
std::vector<std::uint64_t> dataset_histogram(const Model<Scalar>& model, const std::vector<Tensor<Scalar>>& images);

struct FitOptions {
  std::string checkpoint_path;
  /// CSV training log; empty disables it.
  std::string log_path;
  std::function<void(const std::string&)> warn;
  std::function<void(const StepMetrics&)> progress;
};

struct FitResult {
  Model<float> model;
  DatasetSplit split;
};

/// Full training run on the PNG files of dataset_dir. The final checkpoint
/// includes a PMF built from the training-set index histogram.
FitResult fit(const std::string& dataset_dir, const ModelConfig& model_config, const TrainConfig& config,
              const FitOptions& options);

/// Training-log CSV header and row.
std::string training_log_header();
std::string training_log_row(const StepMetrics& m);

}  // namespace diffo
