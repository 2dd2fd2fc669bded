#pragma once

#include <cstdint>
#include <type_traits>
#include <vector>

#include "diffo/autograd.hpp"

namespace diffo {

// Differentiable tensor operations. Each returns a new tape node; gradients
// flow to every input that requires one unless stated otherwise.

template <typename Scalar>
Var<Scalar> constant(Tensor<Scalar> value) {
  return Var<Scalar>(std::move(value), false);
}

template <typename Scalar>
Var<Scalar> operator+(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a, const Var<Scalar>& b);
/// Elementwise product.
template <typename Scalar>
Var<Scalar> operator*(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar>
Var<Scalar> operator*(std::type_identity_t<Scalar> s, const Var<Scalar>& a);

/// 2-D cross-correlation. weight is (c_out, c_in, k, k); bias is (1, c_out, 1, 1)
/// or empty. Zero padding.
template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias,
                   Index stride, Index pad);

/// Group normalization over (channels-in-group, h, w) per sample, with a
/// per-channel affine transform; gamma and beta are (1, c, 1, 1).
template <typename Scalar>
Var<Scalar> group_norm(const Var<Scalar>& x, const Var<Scalar>& gamma, const Var<Scalar>& beta,
                       Index groups, Scalar eps = Scalar(1e-5));

template <typename Scalar>
Var<Scalar> silu(const Var<Scalar>& x);
template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& x);

/// Channel concatenation [a, b].
template <typename Scalar>
Var<Scalar> concat_channels(const Var<Scalar>& a, const Var<Scalar>& b);

/// Nearest-neighbour resize to (h, w).
template <typename Scalar>
Var<Scalar> resize_nearest(const Var<Scalar>& x, Index h, Index w);

/// x + v broadcast over space; v is (n, c, 1, 1).
template <typename Scalar>
Var<Scalar> add_channel_bias(const Var<Scalar>& x, const Var<Scalar>& v);

/// Scales each spatial position's channel vector to unit length.
template <typename Scalar>
Var<Scalar> normalize_channels(const Var<Scalar>& x, Scalar eps = Scalar(1e-10));

/// Same value, no gradient (stop-gradient).
template <typename Scalar>
Var<Scalar> detach(const Var<Scalar>& x);

/// Forward value of y; the incoming gradient is routed to x unchanged and
/// nothing reaches y.
template <typename Scalar>
Var<Scalar> straight_through(const Var<Scalar>& x, const Var<Scalar>& y);

/// Rows of a (K, d, 1, 1) table laid out as an (n, d, h, w) grid; the
/// gradient scatters back into the table.
template <typename Scalar>
Var<Scalar> gather_rows(const Var<Scalar>& table, const std::vector<std::int32_t>& indices,
                        Index n, Index h, Index w);

/// Mean of squared differences, as a scalar node.
template <typename Scalar>
Var<Scalar> mse(const Var<Scalar>& a, const Var<Scalar>& b);

template <typename Scalar>
Var<Scalar> mean(const Var<Scalar>& x);

/// Scalar value of a one-element node.
template <typename Scalar>
Scalar item(const Var<Scalar>& x) {
  return x.value().array()[0];
}

}  // namespace diffo
