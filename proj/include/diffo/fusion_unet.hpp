#pragma once

#include <cstdint>
#include <vector>

#include "diffo/layers.hpp"

namespace diffo {

struct UNetConfig {
  /// Latent channel count d (input and output).
  Index latent_dim = 8;
  /// Width of the adapter output and of the first scale; scale s has base_width << s.
  Index base_width = 64;
  Index num_scales = 3;
  Index blocks_per_scale = 2;
  Index time_embed_dim = 64;
  std::uint64_t seed = 0;

  void validate() const;
  Index width_at(Index scale) const { return base_width << scale; }
};

/// Sinusoidal embedding of step index t, shape (n, dim, 1, 1).
template <typename Scalar>
Tensor<Scalar> timestep_embedding(Index t, Index dim, Index n);

/// Latent adapter plus conv U-Net: f(x_tilde, y, t) = U(A(x_tilde, y), t),
/// A = conv(concat(x_tilde - y, y)).
template <typename Scalar>
class FusionUNet {
 public:
  FusionUNet() = default;
  explicit FusionUNet(const UNetConfig& config);

  /// Residual/base fusion to base_width channels.
  Var<Scalar> adapt(const Var<Scalar>& x_tilde, const Var<Scalar>& y) const;
  /// Clean-latent estimate from a fused tensor at step t.
  Var<Scalar> unet_forward(const Var<Scalar>& z, Index t) const;
  Var<Scalar> operator()(const Var<Scalar>& x_tilde, const Var<Scalar>& y, Index t) const {
    return unet_forward(adapt(x_tilde, y), t);
  }
  /// Inference without recording a tape.
  Tensor<Scalar> denoise(const Tensor<Scalar>& x_tilde, const Tensor<Scalar>& y, Index t) const;

  void collect(ParamList<Scalar>& params, const std::string& prefix) const;
  const UNetConfig& config() const { return config_; }

 private:
  UNetConfig config_;
  Conv2d<Scalar> adapter_;
  Conv2d<Scalar> time_fc1_, time_fc2_;
  std::vector<std::vector<ResBlock<Scalar>>> down_blocks_;
  std::vector<Conv2d<Scalar>> downsample_;
  ResBlock<Scalar> mid_;
  std::vector<std::vector<ResBlock<Scalar>>> up_blocks_;
  GroupNorm<Scalar> norm_out_;
  Conv2d<Scalar> conv_out_;
};

}  // namespace diffo
