#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "diffo/entropy.hpp"

namespace diffo {

inline constexpr std::array<std::uint8_t, 4> kBitstreamMagic{'D', 'F', 'O', '1'};
inline constexpr std::uint8_t kBitstreamVersion = 1;
/// flags bit 0: a K x u16 frequency table follows the header.
inline constexpr std::uint8_t kFlagInlinePmf = 0x01;

using ModelHash = std::array<std::uint8_t, 8>;

/// Fixed-size little-endian header of a .dfo file:
/// magic(4) version(1) flags(1) K(2) h(2) w(2) eta_q(4, IEEE-754) model_hash(8) payload_len(4).
struct BitstreamHeader {
  std::uint8_t version = kBitstreamVersion;
  std::uint8_t flags = 0;
  std::uint16_t codebook_size = 0;
  /// Latent grid size.
  std::uint16_t height = 0;
  std::uint16_t width = 0;
  float eta_q = 0.0f;
  ModelHash model_hash{};
  std::uint32_t payload_len = 0;

  static constexpr std::size_t kBytes = 4 + 1 + 1 + 2 + 2 + 2 + 4 + 8 + 4;

  bool operator==(const BitstreamHeader&) const = default;
};

struct Bitstream {
  BitstreamHeader header;
  std::optional<PmfTable> inline_pmf;
  std::vector<std::uint8_t> payload;
};

/// header || optional inline PMF || payload. flags and payload_len are set
/// from the arguments.
std::vector<std::uint8_t> pack_bitstream(BitstreamHeader header, std::span<const std::uint8_t> payload,
                                         const PmfTable* inline_pmf = nullptr);

/// Parses and validates magic, version, flags, K, the inline table and
/// payload_len; throws FormatError with a diagnostic.
Bitstream unpack_bitstream(std::span<const std::uint8_t> bytes);

}  // namespace diffo
