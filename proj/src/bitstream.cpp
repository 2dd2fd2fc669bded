#include "diffo/bitstream.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <string>

namespace diffo {

namespace {

class Writer {
 public:
  explicit Writer(std::vector<std::uint8_t>& out) : out_(out) {}
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    u8(static_cast<std::uint8_t>(v));
    u8(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    u16(static_cast<std::uint16_t>(v));
    u16(static_cast<std::uint16_t>(v >> 16));
  }
  void bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }

 private:
  std::vector<std::uint8_t>& out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  std::uint8_t u8() {
    need(1);
    return in_[pos_++];
  }
  std::uint16_t u16() {
    const std::uint16_t lo = u8();
    return static_cast<std::uint16_t>(lo | (u8() << 8));
  }
  std::uint32_t u32() {
    const std::uint32_t lo = u16();
    return lo | (static_cast<std::uint32_t>(u16()) << 16);
  }
  std::span<const std::uint8_t> bytes(std::size_t n) {
    need(n);
    auto out = in_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) {
      throw FormatError("bitstream truncated at byte " + std::to_string(pos_) + " of " + std::to_string(in_.size()));
    }
  }

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> pack_bitstream(BitstreamHeader header, std::span<const std::uint8_t> payload,
                                         const PmfTable* inline_pmf) {
  if (payload.size() > 0xFFFFFFFFu) throw FormatError("payload exceeds 4 GiB");
  header.flags = inline_pmf ? static_cast<std::uint8_t>(header.flags | kFlagInlinePmf)
                            : static_cast<std::uint8_t>(header.flags & ~kFlagInlinePmf);
  header.payload_len = static_cast<std::uint32_t>(payload.size());
  if (inline_pmf && inline_pmf->size() != header.codebook_size) {
    throw FormatError("inline PMF has " + std::to_string(inline_pmf->size()) + " symbols, header K is " +
                      std::to_string(header.codebook_size));
  }

  std::vector<std::uint8_t> out;
  out.reserve(BitstreamHeader::kBytes + payload.size() + (inline_pmf ? 2 * inline_pmf->size() : 0));
  Writer w(out);
  w.bytes(kBitstreamMagic);
  w.u8(header.version);
  w.u8(header.flags);
  w.u16(header.codebook_size);
  w.u16(header.height);
  w.u16(header.width);
  w.u32(std::bit_cast<std::uint32_t>(header.eta_q));
  w.bytes(header.model_hash);
  w.u32(header.payload_len);
  if (inline_pmf) {
    for (std::uint32_t f : inline_pmf->frequencies()) w.u16(static_cast<std::uint16_t>(f));
  }
  w.bytes(payload);
  return out;
}

Bitstream unpack_bitstream(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (bytes.size() < BitstreamHeader::kBytes) {
    throw FormatError("bitstream is " + std::to_string(bytes.size()) + " bytes, shorter than the " +
                      std::to_string(BitstreamHeader::kBytes) + "-byte header");
  }
  const auto magic = r.bytes(4);
  if (!std::equal(magic.begin(), magic.end(), kBitstreamMagic.begin())) throw FormatError("bad magic, not a DFO1 bitstream");
  Bitstream bs;
  BitstreamHeader& h = bs.header;
  h.version = r.u8();
  if (h.version != kBitstreamVersion) throw FormatError("unsupported bitstream version " + std::to_string(h.version));
  h.flags = r.u8();
  if ((h.flags & ~kFlagInlinePmf) != 0) throw FormatError("unknown header flags " + std::to_string(h.flags));
  h.codebook_size = r.u16();
  if (h.codebook_size < 2) throw FormatError("header codebook size " + std::to_string(h.codebook_size) + " < 2");
  h.height = r.u16();
  h.width = r.u16();
  h.eta_q = std::bit_cast<float>(r.u32());
  const auto hash = r.bytes(8);
  std::copy(hash.begin(), hash.end(), h.model_hash.begin());
  h.payload_len = r.u32();
  if (h.flags & kFlagInlinePmf) {
    std::vector<std::uint32_t> freq(h.codebook_size);
    for (auto& f : freq) f = r.u16();
    try {
      bs.inline_pmf = PmfTable(std::move(freq));
    } catch (const ConfigError& e) {
      throw FormatError(std::string("invalid inline PMF: ") + e.what());
    }
  }
  if (r.remaining() != h.payload_len) {
    throw FormatError("payload_len " + std::to_string(h.payload_len) + " does not match the " +
                      std::to_string(r.remaining()) + " bytes present");
  }
  const auto payload = r.bytes(h.payload_len);
  bs.payload.assign(payload.begin(), payload.end());
  return bs;
}

}  // namespace diffo
