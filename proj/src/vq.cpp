#include "diffo/vq.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

namespace diffo {

template <typename Scalar>
Codebook<Scalar>::Codebook(Index size, Index dim)
    : Codebook(Tensor<Scalar>::zeros({size, dim, 1, 1})) {}

template <typename Scalar>
Codebook<Scalar>::Codebook(Tensor<Scalar> entries) {
  const Shape s = entries.shape();
  if (s.h != 1 || s.w != 1) throw ShapeError("codebook entries must be (K, d, 1, 1)");
  if (s.n < 2) throw ConfigError("codebook needs at least 2 entries");
  if (s.c < 1) throw ConfigError("codebook entry dimension must be >= 1");
  entries_ = Var<Scalar>(std::move(entries), true);
}

template <typename Scalar>
void Codebook<Scalar>::init_from_latents(const Tensor<Scalar>& latents, Rng& rng) {
  const Shape s = latents.shape();
  if (s.c != dim()) throw ShapeError("codebook init: latent dim mismatch " + s.str());
  const Index cells = s.n * s.plane();
  if (cells == 0) throw ShapeError("codebook init: no latent vectors");
  std::vector<Index> order(static_cast<size_t>(cells));
  std::iota(order.begin(), order.end(), Index(0));
  std::shuffle(order.begin(), order.end(), rng);

  // Per-dimension spread sets the jitter of repeated draws.
  std::vector<double> spread(static_cast<size_t>(dim()));
  for (Index ch = 0; ch < dim(); ++ch) {
    double sum = 0.0, sq = 0.0;
    for (Index n = 0; n < s.n; ++n) {
      const auto plane = latents.array().segment((n * s.c + ch) * s.plane(), s.plane()).template cast<double>();
      sum += plane.sum();
      sq += plane.square().sum();
    }
    const double mean = sum / static_cast<double>(cells);
    spread[ch] = std::sqrt(std::max(0.0, sq / static_cast<double>(cells) - mean * mean));
  }
  std::normal_distribution<double> jitter(0.0, 1.0);

  Tensor<Scalar>& table = entries_.mutable_value();
  for (Index k = 0; k < size(); ++k) {
    const Index cell = order[static_cast<size_t>(k % cells)];
    const Index n = cell / s.plane(), pos = cell % s.plane();
    for (Index ch = 0; ch < dim(); ++ch) {
      double v = latents.array()[(n * s.c + ch) * s.plane() + pos];
      if (k >= cells) v += 1e-2 * std::max(spread[ch], 1e-6) * jitter(rng);
      table.data()[k * dim() + ch] = static_cast<Scalar>(v);
    }
  }
}

template <typename Scalar>
void Codebook<Scalar>::collect(ParamList<Scalar>& params, const std::string& prefix) const {
  params.emplace_back(prefix + ".entries", entries_);
}

template <typename Scalar>
Quantized<Scalar> quantize(const Tensor<Scalar>& latents, const Codebook<Scalar>& codebook) {
  const Shape s = latents.shape();
  const Index d = codebook.dim();
  if (s.c != d) {
    throw ShapeError("quantize: latent dim " + std::to_string(s.c) + " vs codebook dim " +
                     std::to_string(d));
  }
  const Index k = codebook.size();
  const Index hw = s.plane();
  const Scalar* table = codebook.entries().value().data();
  Quantized<Scalar> out{IndexGrid{s.n, s.h, s.w, std::vector<std::int32_t>(s.n * hw)},
                        Tensor<Scalar>(s)};
  std::vector<Scalar> cell(d);
  for (Index n = 0; n < s.n; ++n) {
    for (Index p = 0; p < hw; ++p) {
      for (Index ch = 0; ch < d; ++ch) cell[ch] = latents.data()[(n * d + ch) * hw + p];
      Index best = 0;
      Scalar best_dist = std::numeric_limits<Scalar>::infinity();
      for (Index e = 0; e < k; ++e) {
        const Scalar* v = table + e * d;
        Scalar dist = 0;
        for (Index ch = 0; ch < d; ++ch) {
          const Scalar diff = cell[ch] - v[ch];
          dist += diff * diff;
        }
        if (dist < best_dist) {
          best_dist = dist;
          best = e;
        }
      }
      out.indices.q[n * hw + p] = static_cast<std::int32_t>(best);
      for (Index ch = 0; ch < d; ++ch) out.values.data()[(n * d + ch) * hw + p] = table[best * d + ch];
    }
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> lookup(const IndexGrid& indices, const Codebook<Scalar>& codebook) {
  NoGradGuard guard;
  return embed(indices, codebook).value();
}

template <typename Scalar>
Var<Scalar> embed(const IndexGrid& indices, const Codebook<Scalar>& codebook) {
  return gather_rows(codebook.entries(), indices.q, indices.n, indices.h, indices.w);
}

template <typename Scalar>
VqLoss<Scalar> vq_loss_terms(const Var<Scalar>& x, const Var<Scalar>& y,
                             std::type_identity_t<Scalar> beta) {
  require_same_shape(x.shape(), y.shape(), "vq_loss_terms");
  if (beta < 0) throw ConfigError("commitment weight must be >= 0");
  return {mse(detach(x), y), beta * mse(detach(y), x)};
}

std::vector<std::uint64_t> code_histogram(const IndexGrid& indices, Index codebook_size) {
  std::vector<std::uint64_t> hist(codebook_size, 0);
  for (std::int32_t q : indices.q) {
    if (q < 0 || q >= codebook_size) throw CorruptionError("code index out of range");
    ++hist[q];
  }
  return hist;
}

#define DIFFO_INSTANTIATE_VQ(S)                                                  \
  template class Codebook<S>;                                                    \
  template Quantized<S> quantize(const Tensor<S>&, const Codebook<S>&);          \
  template Tensor<S> lookup(const IndexGrid&, const Codebook<S>&);               \
  template Var<S> embed(const IndexGrid&, const Codebook<S>&);                   \
  template VqLoss<S> vq_loss_terms<S>(const Var<S>&, const Var<S>&, S);

DIFFO_INSTANTIATE_VQ(float)
DIFFO_INSTANTIATE_VQ(double)

}  // namespace diffo
