#pragma once

// Independent reference computations used by the unit and acceptance tests.

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/cpp_int.hpp>

#include <cmath>
#include <limits>
#include <vector>

#include "diffo/vq.hpp"

namespace diffo::oracle {

/// Exhaustive nearest entry per cell in double precision, lowest index on ties.
template <typename Scalar>
std::vector<std::int32_t> brute_force_argmin(const Tensor<Scalar>& x, const Tensor<Scalar>& entries) {
  const Index k_count = entries.n(), d = entries.c();
  std::vector<std::int32_t> q;
  for (Index b = 0; b < x.n(); ++b) {
    for (Index i = 0; i < x.h(); ++i) {
      for (Index j = 0; j < x.w(); ++j) {
        double best = std::numeric_limits<double>::infinity();
        std::int32_t arg = -1;
        for (Index k = 0; k < k_count; ++k) {
          double dist = 0.0;
          for (Index c = 0; c < d; ++c) {
            const double diff = static_cast<double>(x(b, c, i, j)) - static_cast<double>(entries(k, c, 0, 0));
            dist += diff * diff;
          }
          if (dist < best) best = dist, arg = static_cast<std::int32_t>(k);
        }
        q.push_back(arg);
      }
    }
  }
  return q;
}

using Rational = boost::multiprecision::cpp_rational;
using BigFloat = boost::multiprecision::cpp_bin_float_50;

/// Exact real share 65536 (h[k] + 1) / sum(h + 1) of each symbol.
inline std::vector<Rational> exact_shares(const std::vector<std::uint64_t>& histogram) {
  Rational total = 0;
  for (auto h : histogram) total += Rational(h) + 1;
  std::vector<Rational> out;
  for (auto h : histogram) out.push_back(Rational(65536) * (Rational(h) + 1) / total);
  return out;
}

/// sum -log2(freq[s] / 65536) in 50-digit arithmetic.
inline BigFloat code_length_bits(const std::vector<std::int32_t>& symbols, const std::vector<std::uint32_t>& freq) {
  BigFloat bits = 0;
  const BigFloat ln2 = boost::multiprecision::log(BigFloat(2));
  for (auto s : symbols) bits -= boost::multiprecision::log(BigFloat(freq[s]) / 65536) / ln2;
  return bits;
}

}  // namespace diffo::oracle
