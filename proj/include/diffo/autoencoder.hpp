#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "diffo/layers.hpp"

namespace diffo {

struct AutoencoderConfig {
  /// Spatial downsampling f; images are (H, W), latents (H/f, W/f).
  Index downsample_factor = 16;
  /// Width at the latent resolution; shallower levels halve it down to min_width.
  Index channel_width = 64;
  Index latent_dim = 8;
  Index num_res_blocks = 2;
  Index min_width = 8;
  std::uint64_t seed = 0;

  void validate() const;
  /// log2(f)
  Index levels() const;
  /// Channel width at level l in [0, levels()], l = 0 being full resolution.
  Index width_at(Index level) const;
};

/// Convolutional encoder: RGB images (n, 3, H, W) to latents (n, d, H/f, W/f).
template <typename Scalar>
class Encoder {
 public:
  Encoder() = default;
  Encoder(const AutoencoderConfig& config, Rng& rng);

  /// Differentiable forward pass (validates the input shape).
  Var<Scalar> operator()(const Var<Scalar>& images) const;
  /// Inference without recording a tape.
  Tensor<Scalar> encode(const Tensor<Scalar>& images) const;

  void collect(ParamList<Scalar>& params, const std::string& prefix) const;
  const AutoencoderConfig& config() const { return config_; }

 private:
  AutoencoderConfig config_;
  Conv2d<Scalar> conv_in_;
  std::vector<std::vector<ResBlock<Scalar>>> blocks_;
  std::vector<Conv2d<Scalar>> down_;
  std::vector<ResBlock<Scalar>> mid_;
  GroupNorm<Scalar> norm_out_;
  Conv2d<Scalar> conv_out_;
};

/// Mirror of Encoder: latents (n, d, h, w) to images (n, 3, h*f, w*f).
template <typename Scalar>
class Decoder {
 public:
  Decoder() = default;
  Decoder(const AutoencoderConfig& config, Rng& rng);

  /// Differentiable forward pass; output is not clamped.
  Var<Scalar> operator()(const Var<Scalar>& latents) const;
  /// Inference; output clamped to [0, 1].
  Tensor<Scalar> decode(const Tensor<Scalar>& latents) const;

  void collect(ParamList<Scalar>& params, const std::string& prefix) const;
  const AutoencoderConfig& config() const { return config_; }

 private:
  AutoencoderConfig config_;
  Conv2d<Scalar> conv_in_;
  std::vector<ResBlock<Scalar>> mid_;
  std::vector<Conv2d<Scalar>> up_;
  std::vector<std::vector<ResBlock<Scalar>>> blocks_;
  GroupNorm<Scalar> norm_out_;
  Conv2d<Scalar> conv_out_;
};

/// Encoder and decoder initialized from config.seed.
template <typename Scalar>
std::pair<Encoder<Scalar>, Decoder<Scalar>> build_autoencoder(const AutoencoderConfig& config);

/// Throws ShapeError unless images are (n, 3, H, W) with H, W multiples of f.
void check_image_shape(const Shape& shape, Index downsample_factor);

}  // namespace diffo
