#pragma once

#include <cstdint>
#include <vector>

#include "diffo/layers.hpp"

namespace diffo {

/// Codebook indices for a batch of latent grids, row-major per sample.
struct IndexGrid {
  Index n = 1;
  Index h = 0;
  Index w = 0;
  std::vector<std::int32_t> q;

  Index size() const { return static_cast<Index>(q.size()); }
  std::int32_t operator()(Index b, Index i, Index j) const { return q[(b * h + i) * w + j]; }
  bool operator==(const IndexGrid&) const = default;
};

/// K x d table of codebook entries, stored as a (K, d, 1, 1) trainable node.
template <typename Scalar>
class Codebook {
 public:
  Codebook() = default;
  Codebook(Index size, Index dim);
  /// entries is (K, d, 1, 1).
  explicit Codebook(Tensor<Scalar> entries);

  Index size() const { return entries_.shape().n; }
  Index dim() const { return entries_.shape().c; }
  const Var<Scalar>& entries() const { return entries_; }
  Var<Scalar>& entries() { return entries_; }
  Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> entry(Index k) const {
    return {entries_.value().data() + k * dim(), dim()};
  }

  /// Entries set to latent vectors drawn uniformly without replacement from
  /// the given (n, d, h, w) latents. When K exceeds the cell count, the extra
  /// entries repeat drawn vectors with a small jitter so none are duplicates.
  void init_from_latents(const Tensor<Scalar>& latents, Rng& rng);
  void collect(ParamList<Scalar>& params, const std::string& prefix) const;

 private:
  Var<Scalar> entries_;
};

template <typename Scalar>
struct Quantized {
  IndexGrid indices;
  Tensor<Scalar> values;
};

/// Nearest entry by squared Euclidean distance; ties go to the lowest index.
template <typename Scalar>
Quantized<Scalar> quantize(const Tensor<Scalar>& latents, const Codebook<Scalar>& codebook);

/// Entry values for an index grid, as a constant tensor.
template <typename Scalar>
Tensor<Scalar> lookup(const IndexGrid& indices, const Codebook<Scalar>& codebook);

/// Entry values for an index grid with the gradient routed into the codebook.
template <typename Scalar>
Var<Scalar> embed(const IndexGrid& indices, const Codebook<Scalar>& codebook);

template <typename Scalar>
struct VqLoss {
  /// mean((sg(x) - y)^2); reaches only the codebook.
  Var<Scalar> embed;
  /// beta * mean((sg(y) - x)^2); reaches only the encoder.
  Var<Scalar> commit;
};

template <typename Scalar>
VqLoss<Scalar> vq_loss_terms(const Var<Scalar>& x, const Var<Scalar>& y,
                             std::type_identity_t<Scalar> beta);

/// Per-symbol counts of an index grid.
std::vector<std::uint64_t> code_histogram(const IndexGrid& indices, Index codebook_size);

}  // namespace diffo
