#include "diffo/layers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace diffo {

Index norm_groups(Index channels) { return std::gcd(channels, Index(8)); }

template <typename Scalar>
Conv2d<Scalar>::Conv2d(Index in, Index out, Index kernel, Index stride, Rng& rng, bool bias)
    : kernel_(kernel), stride_(stride) {
  const Scalar bound = Scalar(1) / std::sqrt(static_cast<Scalar>(in * kernel * kernel));
  weight_ = Var<Scalar>(Tensor<Scalar>::uniform({out, in, kernel, kernel}, -bound, bound, rng), true);
  if (bias) bias_ = Var<Scalar>(Tensor<Scalar>::uniform({1, out, 1, 1}, -bound, bound, rng), true);
}

template <typename Scalar>
void Conv2d<Scalar>::collect(ParamList<Scalar>& params, const std::string& prefix) const {
  params.emplace_back(prefix + ".weight", weight_);
  if (bias_) params.emplace_back(prefix + ".bias", bias_);
}

template <typename Scalar>
GroupNorm<Scalar>::GroupNorm(Index channels)
    : gamma_(Tensor<Scalar>::ones({1, channels, 1, 1}), true),
      beta_(Tensor<Scalar>::zeros({1, channels, 1, 1}), true),
      groups_(norm_groups(channels)) {}

template <typename Scalar>
void GroupNorm<Scalar>::collect(ParamList<Scalar>& params, const std::string& prefix) const {
  params.emplace_back(prefix + ".gamma", gamma_);
  params.emplace_back(prefix + ".beta", beta_);
}

template <typename Scalar>
ResBlock<Scalar>::ResBlock(Index in, Index out, Index embed_dim, Rng& rng)
    : norm1_(in),
      norm2_(out),
      conv1_(in, out, 3, 1, rng),
      conv2_(out, out, 3, 1, rng),
      has_embed_(embed_dim > 0),
      has_skip_(in != out) {
  if (has_embed_) embed_proj_ = Conv2d<Scalar>(embed_dim, out, 1, 1, rng);
  if (has_skip_) skip_ = Conv2d<Scalar>(in, out, 1, 1, rng);
}

template <typename Scalar>
Var<Scalar> ResBlock<Scalar>::operator()(const Var<Scalar>& x) const {
  return (*this)(x, Var<Scalar>());
}

template <typename Scalar>
Var<Scalar> ResBlock<Scalar>::operator()(const Var<Scalar>& x, const Var<Scalar>& embed) const {
  Var<Scalar> h = conv1_(silu(norm1_(x)));
  if (has_embed_ && embed) h = add_channel_bias(h, embed_proj_(silu(embed)));
  h = conv2_(silu(norm2_(h)));
  return (has_skip_ ? skip_(x) : x) + h;
}

template <typename Scalar>
void ResBlock<Scalar>::collect(ParamList<Scalar>& params, const std::string& prefix) const {
  norm1_.collect(params, prefix + ".norm1");
  conv1_.collect(params, prefix + ".conv1");
  if (has_embed_) embed_proj_.collect(params, prefix + ".embed");
  norm2_.collect(params, prefix + ".norm2");
  conv2_.collect(params, prefix + ".conv2");
  if (has_skip_) skip_.collect(params, prefix + ".skip");
}

template <typename Scalar>
AdamW<Scalar>::AdamW(ParamList<Scalar> params, Options options)
    : params_(std::move(params)), options_(options) {
  for (const auto& [name, p] : params_) {
    m_.push_back(Tensor<Scalar>::zeros(p.shape()));
    v_.push_back(Tensor<Scalar>::zeros(p.shape()));
  }
}

template <typename Scalar>
void AdamW<Scalar>::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  const auto b1 = static_cast<Scalar>(options_.beta1);
  const auto b2 = static_cast<Scalar>(options_.beta2);
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& [name, p] = params_[i];
    if (!p.has_grad()) continue;
    const auto& g = p.node()->grad.array();
    auto& m = m_[i].array();
    auto& v = v_[i].array();
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.square();
    auto& value = p.mutable_value().array();
    const bool decay = options_.weight_decay > 0.0 &&
                       std::find(no_decay_.begin(), no_decay_.end(), name) == no_decay_.end();
    if (decay) value -= static_cast<Scalar>(lr * options_.weight_decay) * value;
    const auto step = static_cast<Scalar>(lr / bc1);
    const auto denom_scale = static_cast<Scalar>(1.0 / std::sqrt(bc2));
    value -= step * m / ((v.sqrt() * denom_scale) + static_cast<Scalar>(options_.eps));
  }
}

template <typename Scalar>
void AdamW<Scalar>::zero_grad() {
  for (auto& [name, p] : params_) p.zero_grad();
}

template class Conv2d<float>;
template class Conv2d<double>;
template class GroupNorm<float>;
template class GroupNorm<double>;
template class ResBlock<float>;
template class ResBlock<double>;
template class AdamW<float>;
template class AdamW<double>;

}  // namespace diffo
