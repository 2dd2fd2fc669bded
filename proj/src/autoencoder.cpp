#include "diffo/autoencoder.hpp"

#include <algorithm>
#include <string>

namespace diffo {

namespace {

/// Pixels are [0, 1] outside the networks and [-1, 1] inside.
template <typename Scalar>
Var<Scalar> offset(const Var<Scalar>& x, Scalar c) {
  return x + constant(Tensor<Scalar>::constant(x.shape(), c));
}

}  // namespace

void AutoencoderConfig::validate() const {
  const Index f = downsample_factor;
  if (f < 2 || f > 64 || (f & (f - 1)) != 0) {
    throw ConfigError("downsample factor must be a power of two in [2, 64], got " +
                      std::to_string(f));
  }
  if (latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
  if (channel_width < 1 || min_width < 1) throw ConfigError("channel widths must be positive");
  if (num_res_blocks < 0) throw ConfigError("num_res_blocks must be >= 0");
}

Index AutoencoderConfig::levels() const {
  Index l = 0;
  for (Index f = downsample_factor; f > 1; f >>= 1) ++l;
  return l;
}

Index AutoencoderConfig::width_at(Index level) const {
  return std::max(min_width, channel_width >> (levels() - level));
}

void check_image_shape(const Shape& s, Index f) {
  if (s.c != 3) throw ShapeError("expected 3-channel images, got " + s.str());
  if (s.h <= 0 || s.w <= 0 || s.h % f != 0 || s.w % f != 0) {
    throw ShapeError("image size " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                     " is not divisible by the downsample factor " + std::to_string(f));
  }
}

template <typename Scalar>
Encoder<Scalar>::Encoder(const AutoencoderConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  const Index levels = config_.levels();
  conv_in_ = Conv2d<Scalar>(3, config_.width_at(0), 3, 1, rng);
  for (Index l = 0; l < levels; ++l) {
    const Index w = config_.width_at(l);
    std::vector<ResBlock<Scalar>> level;
    for (Index b = 0; b < config_.num_res_blocks; ++b) level.emplace_back(w, w, 0, rng);
    blocks_.push_back(std::move(level));
    down_.emplace_back(w, config_.width_at(l + 1), 3, 2, rng);
  }
  const Index bottom = config_.width_at(levels);
  for (Index b = 0; b < config_.num_res_blocks; ++b) mid_.emplace_back(bottom, bottom, 0, rng);
  norm_out_ = GroupNorm<Scalar>(bottom);
  conv_out_ = Conv2d<Scalar>(bottom, config_.latent_dim, 3, 1, rng);
}

template <typename Scalar>
Var<Scalar> Encoder<Scalar>::operator()(const Var<Scalar>& images) const {
  check_image_shape(images.shape(), config_.downsample_factor);
  Var<Scalar> h = conv_in_(offset(Scalar(2) * images, Scalar(-1)));
  for (size_t l = 0; l < blocks_.size(); ++l) {
    for (const auto& block : blocks_[l]) h = block(h);
    h = down_[l](h);
  }
  for (const auto& block : mid_) h = block(h);
  return conv_out_(silu(norm_out_(h)));
}

template <typename Scalar>
Tensor<Scalar> Encoder<Scalar>::encode(const Tensor<Scalar>& images) const {
  NoGradGuard guard;
  return (*this)(constant(images)).value();
}

template <typename Scalar>
void Encoder<Scalar>::collect(ParamList<Scalar>& params, const std::string& prefix) const {
  conv_in_.collect(params, prefix + ".conv_in");
  for (size_t l = 0; l < blocks_.size(); ++l) {
    for (size_t b = 0; b < blocks_[l].size(); ++b) {
      blocks_[l][b].collect(params, prefix + ".level" + std::to_string(l) + ".block" +
                                        std::to_string(b));
    }
    down_[l].collect(params, prefix + ".level" + std::to_string(l) + ".down");
  }
  for (size_t b = 0; b < mid_.size(); ++b) mid_[b].collect(params, prefix + ".mid" + std::to_string(b));
  norm_out_.collect(params, prefix + ".norm_out");
  conv_out_.collect(params, prefix + ".conv_out");
}

template <typename Scalar>
Decoder<Scalar>::Decoder(const AutoencoderConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  const Index levels = config_.levels();
  const Index bottom = config_.width_at(levels);
  conv_in_ = Conv2d<Scalar>(config_.latent_dim, bottom, 3, 1, rng);
  for (Index b = 0; b < config_.num_res_blocks; ++b) mid_.emplace_back(bottom, bottom, 0, rng);
  // up_[l] / blocks_[l] produce level l from level l + 1.
  up_.resize(levels);
  blocks_.resize(levels);
  for (Index l = levels - 1; l >= 0; --l) {
    const Index w = config_.width_at(l);
    up_[l] = Conv2d<Scalar>(config_.width_at(l + 1), w, 3, 1, rng);
    for (Index b = 0; b < config_.num_res_blocks; ++b) blocks_[l].emplace_back(w, w, 0, rng);
  }
  norm_out_ = GroupNorm<Scalar>(config_.width_at(0));
  conv_out_ = Conv2d<Scalar>(config_.width_at(0), 3, 3, 1, rng);
}

template <typename Scalar>
Var<Scalar> Decoder<Scalar>::operator()(const Var<Scalar>& latents) const {
  if (latents.shape().c != config_.latent_dim) {
    throw ShapeError("decoder expects " + std::to_string(config_.latent_dim) +
                     " latent channels, got " + latents.shape().str());
  }
  Var<Scalar> h = conv_in_(latents);
  for (const auto& block : mid_) h = block(h);
  for (Index l = static_cast<Index>(up_.size()) - 1; l >= 0; --l) {
    h = up_[l](resize_nearest(h, h.shape().h * 2, h.shape().w * 2));
    for (const auto& block : blocks_[l]) h = block(h);
  }
  return offset(Scalar(0.5) * conv_out_(silu(norm_out_(h))), Scalar(0.5));
}

template <typename Scalar>
Tensor<Scalar> Decoder<Scalar>::decode(const Tensor<Scalar>& latents) const {
  NoGradGuard guard;
  Tensor<Scalar> out = (*this)(constant(latents)).value();
  out.array() = out.array().max(Scalar(0)).min(Scalar(1));
  return out;
}

template <typename Scalar>
void Decoder<Scalar>::collect(ParamList<Scalar>& params, const std::string& prefix) const {
  conv_in_.collect(params, prefix + ".conv_in");
  for (size_t b = 0; b < mid_.size(); ++b) mid_[b].collect(params, prefix + ".mid" + std::to_string(b));
  for (Index l = static_cast<Index>(up_.size()) - 1; l >= 0; --l) {
    const std::string level = prefix + ".level" + std::to_string(l);
    up_[l].collect(params, level + ".up");
    for (size_t b = 0; b < blocks_[l].size(); ++b) {
      blocks_[l][b].collect(params, level + ".block" + std::to_string(b));
    }
  }
  norm_out_.collect(params, prefix + ".norm_out");
  conv_out_.collect(params, prefix + ".conv_out");
}

template <typename Scalar>
std::pair<Encoder<Scalar>, Decoder<Scalar>> build_autoencoder(const AutoencoderConfig& config) {
  config.validate();
  Rng rng(config.seed);
  Encoder<Scalar> encoder(config, rng);
  Decoder<Scalar> decoder(config, rng);
  return {std::move(encoder), std::move(decoder)};
}

template class Encoder<float>;
template class Encoder<double>;
template class Decoder<float>;
template class Decoder<double>;
template std::pair<Encoder<float>, Decoder<float>> build_autoencoder(const AutoencoderConfig&);
template std::pair<Encoder<double>, Decoder<double>> build_autoencoder(const AutoencoderConfig&);

}  // namespace diffo
