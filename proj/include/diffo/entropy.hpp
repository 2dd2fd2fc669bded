#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "diffo/vq.hpp"

namespace diffo {

/// Probability precision of the range coder: frequencies sum to 2^16.
inline constexpr std::uint32_t kPmfTotal = 1u << 16;
inline constexpr int kPmfBits = 16;

/// Static integer symbol model: every frequency >= 1, sum exactly 65536.
class PmfTable {
 public:
  PmfTable() = default;
  /// Validates the invariants; throws ConfigError otherwise.
  explicit PmfTable(std::vector<std::uint32_t> frequencies);
  static PmfTable uniform(Index symbols);

  Index size() const { return static_cast<Index>(freq_.size()); }
  std::uint32_t freq(Index k) const { return freq_[k]; }
  /// Sum of frequencies of symbols below k; cum(size()) == 65536.
  std::uint32_t cum(Index k) const { return cum_[k]; }
  const std::vector<std::uint32_t>& frequencies() const { return freq_; }
  /// Symbol s with cum(s) <= value < cum(s + 1).
  std::int32_t symbol_for(std::uint32_t value) const;

  bool operator==(const PmfTable& other) const { return freq_ == other.freq_; }

 private:
  std::vector<std::uint32_t> freq_;
  std::vector<std::uint32_t> cum_;
};

/// Add-one smoothed, integer-normalized model of a symbol histogram.
///
/// Shares 65536 * (h[k] + 1) / sum(h + 1) are floored and the shortfall is
/// handed out by largest remainder (lowest index first on ties). Symbols that
/// still round to zero are raised to 1, taking counts from the largest entry
/// (smallest weight, then highest index, on ties), which keeps the weak
/// ordering of the histogram.
PmfTable build_pmf(std::span<const std::uint64_t> histogram);

/// Ideal code length sum(-log2(freq[q] / 65536)) in bits.
double estimate_bits(std::span<const std::int32_t> symbols, const PmfTable& pmf);

/// Ideal code length per image pixel for an index grid covering an
/// H x W image.
double estimate_bpp(const IndexGrid& indices, const PmfTable& pmf, Index height, Index width);

/// 32-bit range encoder with a 64-bit low register and deferred carry
/// propagation. Symbol s narrows [low, low + range) to the sub-interval
/// between floor(range * cum(s) / 65536) and floor(range * cum(s + 1) / 65536),
/// products taken in 64 bits. Renormalizes a byte at a time while
/// range < 2^24 and flushes five bytes at the end; the first output byte is
/// always zero.
class RangeEncoder {
 public:
  void encode(std::int32_t symbol, const PmfTable& pmf);
  /// Flushes and returns the payload; the encoder is reset afterwards.
  std::vector<std::uint8_t> finish();

 private:
  void shift_low();

  std::uint64_t low_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint8_t cache_ = 0;
  std::uint64_t cache_size_ = 1;
  std::vector<std::uint8_t> out_;
};

/// Mirror of RangeEncoder. Reading past the payload throws CorruptionError.
class RangeDecoder {
 public:
  explicit RangeDecoder(std::span<const std::uint8_t> payload);
  std::int32_t decode(const PmfTable& pmf);
  std::size_t consumed() const { return pos_; }

 private:
  std::uint8_t next();

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
  std::uint32_t code_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
};

/// Raster-order range coding of code indices.
std::vector<std::uint8_t> encode_indices(std::span<const std::int32_t> symbols, const PmfTable& pmf);
std::vector<std::int32_t> decode_indices(std::span<const std::uint8_t> payload, std::size_t count,
                                         const PmfTable& pmf);

}  // namespace diffo
