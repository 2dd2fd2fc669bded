#include "diffo/entropy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <string>

namespace diffo {

PmfTable::PmfTable(std::vector<std::uint32_t> frequencies) : freq_(std::move(frequencies)) {
  if (freq_.size() < 2) throw ConfigError("PMF needs at least 2 symbols");
  if (freq_.size() > 65535) throw ConfigError("PMF supports at most 65535 symbols");
  cum_.assign(freq_.size() + 1, 0);
  std::uint64_t total = 0;
  for (size_t k = 0; k < freq_.size(); ++k) {
    if (freq_[k] == 0) throw ConfigError("PMF frequency of symbol " + std::to_string(k) + " is 0");
    cum_[k] = static_cast<std::uint32_t>(total);
    total += freq_[k];
    if (total > kPmfTotal) break;
  }
  if (total != kPmfTotal) {
    throw ConfigError("PMF frequencies sum to " + std::to_string(total) + ", expected 65536");
  }
  cum_.back() = kPmfTotal;
}

PmfTable PmfTable::uniform(Index symbols) {
  std::vector<std::uint64_t> zeros(symbols, 0);
  return build_pmf(zeros);
}

std::int32_t PmfTable::symbol_for(std::uint32_t value) const {
  auto it = std::upper_bound(cum_.begin(), cum_.end(), value);
  return static_cast<std::int32_t>(std::distance(cum_.begin(), it) - 1);
}

PmfTable build_pmf(std::span<const std::uint64_t> histogram) {
  const size_t k = histogram.size();
  if (k < 2) throw ConfigError("PMF needs at least 2 symbols");
  if (k > 65535) throw ConfigError("codebook size " + std::to_string(k) + " exceeds 65535");

  using u128 = unsigned __int128;
  std::vector<std::uint64_t> weight(k);
  u128 total_weight = 0;
  for (size_t i = 0; i < k; ++i) {
    weight[i] = histogram[i] + 1;
    total_weight += weight[i];
  }

  std::vector<std::uint32_t> freq(k);
  std::vector<u128> remainder(k);
  std::uint64_t assigned = 0;
  for (size_t i = 0; i < k; ++i) {
    const u128 scaled = static_cast<u128>(weight[i]) * kPmfTotal;
    freq[i] = static_cast<std::uint32_t>(scaled / total_weight);
    remainder[i] = scaled % total_weight;
    assigned += freq[i];
  }
  std::vector<size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return remainder[a] > remainder[b]; });
  for (std::uint64_t i = 0; assigned < kPmfTotal; ++i, ++assigned) ++freq[order[i]];

  // Floor at 1, taking from the current largest entry.
  std::uint64_t deficit = 0;
  for (auto& f : freq) {
    if (f == 0) {
      f = 1;
      ++deficit;
    }
  }
  if (deficit > 0) {
    auto lower_priority = [&](size_t a, size_t b) {
      if (freq[a] != freq[b]) return freq[a] < freq[b];
      if (weight[a] != weight[b]) return weight[a] > weight[b];
      return a < b;
    };
    std::priority_queue<size_t, std::vector<size_t>, decltype(lower_priority)> heap(lower_priority);
    for (size_t i = 0; i < k; ++i) heap.push(i);
    while (deficit > 0) {
      const size_t donor = heap.top();
      heap.pop();
      --freq[donor];
      --deficit;
      heap.push(donor);
    }
  }
  return PmfTable(std::move(freq));
}

double estimate_bits(std::span<const std::int32_t> symbols, const PmfTable& pmf) {
  double bits = 0.0;
  for (std::int32_t q : symbols) {
    if (q < 0 || q >= pmf.size()) {
      throw CorruptionError("symbol " + std::to_string(q) + " outside PMF of size " +
                            std::to_string(pmf.size()));
    }
    bits += kPmfBits - std::log2(static_cast<double>(pmf.freq(q)));
  }
  return bits;
}

double estimate_bpp(const IndexGrid& indices, const PmfTable& pmf, Index height, Index width) {
  if (height <= 0 || width <= 0) throw ShapeError("estimate_bpp: empty image");
  return estimate_bits(indices.q, pmf) / static_cast<double>(height * width);
}

namespace {

/// floor(range * c / 65536) with a 64-bit product.
std::uint32_t scale(std::uint32_t range, std::uint32_t c) {
  return static_cast<std::uint32_t>((static_cast<std::uint64_t>(range) * c) >> kPmfBits);
}

}  // namespace

void RangeEncoder::encode(std::int32_t symbol, const PmfTable& pmf) {
  if (symbol < 0 || symbol >= pmf.size()) {
    throw CorruptionError("cannot encode symbol " + std::to_string(symbol));
  }
  const std::uint32_t lo = scale(range_, pmf.cum(symbol));
  const std::uint32_t hi = scale(range_, pmf.cum(symbol + 1));
  low_ += lo;
  range_ = hi - lo;
  while (range_ < (1u << 24)) {
    range_ <<= 8;
    shift_low();
  }
}

void RangeEncoder::shift_low() {
  if (static_cast<std::uint32_t>(low_) < 0xFF000000u || (low_ >> 32) != 0) {
    const auto carry = static_cast<std::uint8_t>(low_ >> 32);
    std::uint8_t pending = cache_;
    do {
      out_.push_back(static_cast<std::uint8_t>(pending + carry));
      pending = 0xFF;
    } while (--cache_size_ != 0);
    cache_ = static_cast<std::uint8_t>(low_ >> 24);
  }
  ++cache_size_;
  low_ = (low_ & 0x00FFFFFFu) << 8;
}

std::vector<std::uint8_t> RangeEncoder::finish() {
  for (int i = 0; i < 5; ++i) shift_low();
  std::vector<std::uint8_t> out = std::move(out_);
  *this = RangeEncoder();
  return out;
}

RangeDecoder::RangeDecoder(std::span<const std::uint8_t> payload) : in_(payload) {
  if (next() != 0) throw CorruptionError("range coder stream must start with a zero byte");
  for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next();
}

std::uint8_t RangeDecoder::next() {
  if (pos_ >= in_.size()) throw CorruptionError("range coder payload is truncated");
  return in_[pos_++];
}

std::int32_t RangeDecoder::decode(const PmfTable& pmf) {
  // Largest cumulative count c with scale(range, c) <= code.
  const std::uint64_t value = (((static_cast<std::uint64_t>(code_) + 1) << kPmfBits) - 1) / range_;
  if (value >= kPmfTotal) throw CorruptionError("range coder state out of bounds");
  const std::int32_t symbol = pmf.symbol_for(static_cast<std::uint32_t>(value));
  const std::uint32_t lo = scale(range_, pmf.cum(symbol));
  const std::uint32_t hi = scale(range_, pmf.cum(symbol + 1));
  code_ -= lo;
  range_ = hi - lo;
  while (range_ < (1u << 24)) {
    code_ = (code_ << 8) | next();
    range_ <<= 8;
  }
  return symbol;
}

std::vector<std::uint8_t> encode_indices(std::span<const std::int32_t> symbols, const PmfTable& pmf) {
  RangeEncoder enc;
  for (std::int32_t s : symbols) enc.encode(s, pmf);
  return enc.finish();
}

std::vector<std::int32_t> decode_indices(std::span<const std::uint8_t> payload, std::size_t count,
                                         const PmfTable& pmf) {
  RangeDecoder dec(payload);
  std::vector<std::int32_t> out(count);
  for (auto& s : out) s = dec.decode(pmf);
  return out;
}

}  // namespace diffo
