#include "diffo/fusion_unet.hpp"

#include <cmath>
#include <string>

namespace diffo {

void UNetConfig::validate() const {
  if (latent_dim < 1) throw ConfigError("U-Net latent_dim must be >= 1");
  if (num_scales < 2) throw ConfigError("U-Net needs at least 2 scales");
  if (base_width < 1 || blocks_per_scale < 1) throw ConfigError("U-Net widths and block counts must be positive");
  if (time_embed_dim < 2 || time_embed_dim % 2 != 0) throw ConfigError("time_embed_dim must be even and >= 2");
}

template <typename Scalar>
Tensor<Scalar> timestep_embedding(Index t, Index dim, Index n) {
  Tensor<Scalar> out({n, dim, 1, 1});
  const Index half = dim / 2;
  for (Index i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    const double arg = static_cast<double>(t) * freq;
    for (Index b = 0; b < n; ++b) {
      out(b, i, 0, 0) = static_cast<Scalar>(std::sin(arg));
      out(b, half + i, 0, 0) = static_cast<Scalar>(std::cos(arg));
    }
  }
  return out;
}

template <typename Scalar>
FusionUNet<Scalar>::FusionUNet(const UNetConfig& config) : config_(config) {
  config_.validate();
  Rng rng(config_.seed);
  const Index e = config_.time_embed_dim;
  const Index scales = config_.num_scales;
  adapter_ = Conv2d<Scalar>(2 * config_.latent_dim, config_.base_width, 3, 1, rng);
  time_fc1_ = Conv2d<Scalar>(e, e, 1, 1, rng);
  time_fc2_ = Conv2d<Scalar>(e, e, 1, 1, rng);

  Index in = config_.base_width;
  for (Index s = 0; s < scales; ++s) {
    const Index w = config_.width_at(s);
    std::vector<ResBlock<Scalar>> blocks;
    for (Index b = 0; b < config_.blocks_per_scale; ++b) {
      blocks.emplace_back(in, w, e, rng);
      in = w;
    }
    down_blocks_.push_back(std::move(blocks));
    if (s + 1 < scales) downsample_.emplace_back(w, w, 3, 2, rng);
  }
  mid_ = ResBlock<Scalar>(in, in, e, rng);
  for (Index s = scales - 2; s >= 0; --s) {
    const Index w = config_.width_at(s);
    std::vector<ResBlock<Scalar>> blocks;
    blocks.emplace_back(in + w, w, e, rng);
    for (Index b = 1; b < config_.blocks_per_scale; ++b) blocks.emplace_back(w, w, e, rng);
    up_blocks_.push_back(std::move(blocks));
    in = w;
  }
  norm_out_ = GroupNorm<Scalar>(in);
  conv_out_ = Conv2d<Scalar>(in, config_.latent_dim, 3, 1, rng);
}

template <typename Scalar>
Var<Scalar> FusionUNet<Scalar>::adapt(const Var<Scalar>& x_tilde, const Var<Scalar>& y) const {
  require_same_shape(x_tilde.shape(), y.shape(), "adapt");
  if (y.shape().c != config_.latent_dim) {
    throw ShapeError("adapter expects " + std::to_string(config_.latent_dim) + " latent channels, got " +
                     y.shape().str());
  }
  return adapter_(concat_channels(x_tilde - y, y));
}

template <typename Scalar>
Var<Scalar> FusionUNet<Scalar>::unet_forward(const Var<Scalar>& z, Index t) const {
  if (z.shape().c != config_.base_width) throw ShapeError("U-Net input width mismatch: " + z.shape().str());
  Var<Scalar> embed = constant(timestep_embedding<Scalar>(t, config_.time_embed_dim, z.shape().n));
  embed = time_fc2_(silu(time_fc1_(embed)));

  std::vector<Var<Scalar>> skips;
  Var<Scalar> h = z;
  for (size_t s = 0; s < down_blocks_.size(); ++s) {
    for (const auto& block : down_blocks_[s]) h = block(h, embed);
    if (s < downsample_.size()) {
      skips.push_back(h);
      h = downsample_[s](h);
    }
  }
  h = mid_(h, embed);
  for (const auto& blocks : up_blocks_) {
    const Var<Scalar> skip = skips.back();
    skips.pop_back();
    h = concat_channels(resize_nearest(h, skip.shape().h, skip.shape().w), skip);
    for (const auto& block : blocks) h = block(h, embed);
  }
  return conv_out_(silu(norm_out_(h)));
}

template <typename Scalar>
Tensor<Scalar> FusionUNet<Scalar>::denoise(const Tensor<Scalar>& x_tilde, const Tensor<Scalar>& y,
                                           Index t) const {
  NoGradGuard guard;
  return (*this)(constant(x_tilde), constant(y), t).value();
}

template <typename Scalar>
void FusionUNet<Scalar>::collect(ParamList<Scalar>& params, const std::string& prefix) const {
  adapter_.collect(params, prefix + ".adapter");
  time_fc1_.collect(params, prefix + ".time_fc1");
  time_fc2_.collect(params, prefix + ".time_fc2");
  for (size_t s = 0; s < down_blocks_.size(); ++s) {
    for (size_t b = 0; b < down_blocks_[s].size(); ++b) {
      down_blocks_[s][b].collect(params, prefix + ".down" + std::to_string(s) + ".block" + std::to_string(b));
    }
    if (s < downsample_.size()) downsample_[s].collect(params, prefix + ".down" + std::to_string(s) + ".downsample");
  }
  mid_.collect(params, prefix + ".mid");
  for (size_t u = 0; u < up_blocks_.size(); ++u) {
    for (size_t b = 0; b < up_blocks_[u].size(); ++b) {
      up_blocks_[u][b].collect(params, prefix + ".up" + std::to_string(u) + ".block" + std::to_string(b));
    }
  }
  norm_out_.collect(params, prefix + ".norm_out");
  conv_out_.collect(params, prefix + ".conv_out");
}

template Tensor<float> timestep_embedding<float>(Index, Index, Index);
template Tensor<double> timestep_embedding<double>(Index, Index, Index);
template class FusionUNet<float>;
template class FusionUNet<double>;

}  // namespace diffo
