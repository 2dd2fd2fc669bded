#pragma once

#include <string>
#include <utility>
#include <vector>

#include "diffo/ops.hpp"

namespace diffo {

/// Named trainable tensors, in registration order. Handles alias the
/// module's own parameters.
template <typename Scalar>
using ParamList = std::vector<std::pair<std::string, Var<Scalar>>>;

/// Number of normalization groups used for a c-channel activation.
Index norm_groups(Index channels);

template <typename Scalar>
class Conv2d {
 public:
  Conv2d() = default;
  /// Weights and bias uniform in +-1/sqrt(fan_in).
  Conv2d(Index in, Index out, Index kernel, Index stride, Rng& rng, bool bias = true);

  Var<Scalar> operator()(const Var<Scalar>& x) const {
    return conv2d(x, weight_, bias_, stride_, kernel_ / 2);
  }
  void collect(ParamList<Scalar>& params, const std::string& prefix) const;
  Index out_channels() const { return weight_.shape().n; }

 private:
  Var<Scalar> weight_;
  Var<Scalar> bias_;
  Index kernel_ = 1;
  Index stride_ = 1;
};

template <typename Scalar>
class GroupNorm {
 public:
  GroupNorm() = default;
  explicit GroupNorm(Index channels);

  Var<Scalar> operator()(const Var<Scalar>& x) const {
    return group_norm(x, gamma_, beta_, groups_);
  }
  void collect(ParamList<Scalar>& params, const std::string& prefix) const;

 private:
  Var<Scalar> gamma_;
  Var<Scalar> beta_;
  Index groups_ = 1;
};

/// Pre-activation residual block: norm, SiLU, conv, (optional per-channel
/// embedding shift), norm, SiLU, conv, plus a 1x1 projection on the skip
/// path when the width changes.
template <typename Scalar>
class ResBlock {
 public:
  ResBlock() = default;
  ResBlock(Index in, Index out, Index embed_dim, Rng& rng);

  Var<Scalar> operator()(const Var<Scalar>& x) const;
  /// embed is (n, embed_dim, 1, 1); ignored when the block has no embedding.
  Var<Scalar> operator()(const Var<Scalar>& x, const Var<Scalar>& embed) const;
  void collect(ParamList<Scalar>& params, const std::string& prefix) const;

 private:
  GroupNorm<Scalar> norm1_, norm2_;
  Conv2d<Scalar> conv1_, conv2_;
  Conv2d<Scalar> embed_proj_;
  Conv2d<Scalar> skip_;
  bool has_embed_ = false;
  bool has_skip_ = false;
};

/// Adam with decoupled weight decay.
template <typename Scalar>
class AdamW {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
  };

  AdamW() = default;
  AdamW(ParamList<Scalar> params, Options options);

  /// One update from the parameters' accumulated gradients. Parameters
  /// whose name is listed in no_decay are not decayed.
  void step(double lr);
  void zero_grad();
  long steps() const { return t_; }

  void set_no_decay(std::vector<std::string> names) { no_decay_ = std::move(names); }

  /// Moment buffers, in parameter order, for checkpointing.
  std::vector<Tensor<Scalar>>& first_moments() { return m_; }
  std::vector<Tensor<Scalar>>& second_moments() { return v_; }
  void set_steps(long t) { t_ = t; }

 private:
  ParamList<Scalar> params_;
  Options options_;
  std::vector<Tensor<Scalar>> m_, v_;
  std::vector<std::string> no_decay_;
  long t_ = 0;
};

}  // namespace diffo
