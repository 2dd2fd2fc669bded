#include "support.hpp"

#include <algorithm>
#include <cstring>

#include "diffo/bitstream.hpp"
#include "diffo/entropy.hpp"
#include "oracles.hpp"

using namespace diffo;

namespace {

// Largest-remainder normalization computed with exact rationals, then the
// floor-at-one pass done by linear scans.
std::vector<std::uint32_t> rational_pmf(const std::vector<std::uint64_t>& hist) {
  const auto shares = oracle::exact_shares(hist);
  const size_t k = hist.size();
  std::vector<std::uint32_t> freq(k);
  std::vector<oracle::Rational> rem(k);
  std::uint64_t assigned = 0;
  for (size_t i = 0; i < k; ++i) {
    const auto fl = boost::multiprecision::numerator(shares[i]) / boost::multiprecision::denominator(shares[i]);
    freq[i] = static_cast<std::uint32_t>(fl);
    rem[i] = shares[i] - oracle::Rational(fl);
    assigned += freq[i];
  }
  std::vector<size_t> order(k);
  for (size_t i = 0; i < k; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return rem[a] > rem[b]; });
  for (size_t i = 0; assigned < 65536; ++i, ++assigned) ++freq[order[i]];
  // Donor scans are quadratic; histograms here keep the zero count small.
  for (size_t i = 0; i < k; ++i) {
    if (freq[i] != 0) continue;
    freq[i] = 1;
    size_t donor = 0;
    for (size_t j = 1; j < k; ++j) {
      const bool better = freq[j] > freq[donor] || (freq[j] == freq[donor] && hist[j] < hist[donor]) ||
                          (freq[j] == freq[donor] && hist[j] == hist[donor] && j > donor);
      if (better) donor = j;
    }
    --freq[donor];
  }
  return freq;
}

using test::fuzz_job;
using test::FuzzJob;

}  // namespace

TEST_CASE("build_pmf examples") {
  const PmfTable uniform = build_pmf(std::vector<std::uint64_t>(256, 0));
  for (Index k = 0; k < 256; ++k) CHECK(uniform.freq(k) == 256);

  const PmfTable skew = build_pmf(std::vector<std::uint64_t>{65534, 0});
  CHECK(skew.freq(0) == 65535);
  CHECK(skew.freq(1) == 1);
}

TEST_CASE("build_pmf matches exact rational normalization") {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(seed);
    const size_t k = seed < 100 ? 16 : 2 + rng() % 400;
    std::vector<std::uint64_t> hist(k);
    for (auto& h : hist) h = seed % 2 ? rng() % 1000 : (rng() % 5 == 0 ? rng() % 1000000 : 0);
    const PmfTable pmf = build_pmf(hist);
    CAPTURE(seed);
    CHECK(pmf.frequencies() == rational_pmf(hist));
    CHECK(pmf.cum(pmf.size()) == 65536u);
    bool ordered = true;
    for (size_t i = 0; i < k; ++i) {
      for (size_t j = 0; j < k; ++j) ordered &= !(hist[i] < hist[j]) || pmf.freq(i) <= pmf.freq(j);
    }
    CHECK(ordered);
  }
}

TEST_CASE("build_pmf floors every symbol at one") {
  std::vector<std::uint64_t> hist(40000, 0);
  hist[7] = 1ull << 40;
  const PmfTable pmf = build_pmf(hist);
  CHECK(pmf.freq(7) == 65536 - 39999);
  for (Index k = 0; k < 40000; ++k) {
    if (k != 7) CHECK(pmf.freq(k) == 1);
  }
}

TEST_CASE("pmf validation") {
  CHECK_THROWS_AS(build_pmf(std::vector<std::uint64_t>(65536, 0)), ConfigError);
  CHECK_THROWS_AS(build_pmf(std::vector<std::uint64_t>(1, 0)), ConfigError);
  CHECK_THROWS_AS(PmfTable({65535, 2}), ConfigError);
  CHECK_THROWS_AS(PmfTable({65536, 0}), ConfigError);
  CHECK_NOTHROW(PmfTable({65535, 1}));
  const PmfTable p({1, 65534, 1});
  CHECK(p.symbol_for(0) == 0);
  CHECK(p.symbol_for(1) == 1);
  CHECK(p.symbol_for(65534) == 1);
  CHECK(p.symbol_for(65535) == 2);
}

TEST_CASE("estimate_bpp closed forms") {
  IndexGrid g{1, 16, 16, std::vector<std::int32_t>(256)};
  for (size_t i = 0; i < g.q.size(); ++i) g.q[i] = static_cast<std::int32_t>(i * 37 % 256);
  CHECK(estimate_bpp(g, PmfTable::uniform(256), 256, 256) == 0.03125);
  for (size_t i = 0; i < g.q.size(); ++i) g.q[i] = static_cast<std::int32_t>(i * 4099 % 8192);
  CHECK(estimate_bpp(g, PmfTable::uniform(8192), 256, 256) == 0.05078125);
}

TEST_CASE("estimate_bpp matches a 50-digit entropy sum") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const FuzzJob job = fuzz_job(seed, 300, 4096);
    if (job.q.empty()) continue;
    const IndexGrid g{1, 1, static_cast<Index>(job.q.size()), job.q};
    const double got = estimate_bpp(g, job.pmf, 64, 64);
    const double want = static_cast<double>(oracle::code_length_bits(job.q, job.pmf.frequencies()) / 4096);
    CHECK(std::abs(got - want) <= 1e-9 * want);
  }
  const IndexGrid bad{1, 1, 1, {3}};
  CHECK_THROWS_AS(estimate_bpp(bad, PmfTable::uniform(3), 8, 8), CorruptionError);
}

TEST_CASE("empty stream is the five flush bytes") {
  const auto payload = encode_indices({}, PmfTable::uniform(4));
  CHECK(payload == std::vector<std::uint8_t>(5, 0));
  CHECK(decode_indices(payload, 0, PmfTable::uniform(4)).empty());
}

TEST_CASE("near-degenerate pmf codes a constant grid in a few bytes") {
  std::vector<std::uint32_t> freq(256, 1);
  freq[9] = 65281;
  const PmfTable pmf(freq);
  const std::vector<std::int32_t> q(256, 9);
  const auto payload = encode_indices(q, pmf);
  CHECK(payload.size() <= 16);
  CHECK(decode_indices(payload, q.size(), pmf) == q);
}

TEST_CASE("fuzzed round trips are exact and rate-sound") {
  double worst_over = -1e9, worst_under = 1e9;
  for (std::uint64_t seed = 0; seed < 10000; ++seed) {
    const FuzzJob job = fuzz_job(seed, 512, 300);
    const auto payload = encode_indices(job.q, job.pmf);
    const auto back = decode_indices(payload, job.q.size(), job.pmf);
    if (back != job.q) FAIL("round trip mismatch at seed " << seed);
    const double bits = estimate_bits(job.q, job.pmf);
    const double actual = 8.0 * static_cast<double>(payload.size());
    worst_over = std::max(worst_over, actual - bits);
    worst_under = std::min(worst_under, actual - std::floor(bits));
    if (payload.size() > std::ceil(bits / 8) + 5) FAIL("payload too long at seed " << seed);
  }
  CHECK(worst_over <= 40.0);
  CHECK(worst_under >= -8.0);
}

TEST_CASE("decoder rejects corrupt and truncated payloads") {
  const FuzzJob job = fuzz_job(1, 64, 200);
  auto payload = encode_indices(job.q, job.pmf);
  REQUIRE(payload.size() > 6);
  auto truncated = payload;
  truncated.resize(payload.size() - 3);
  CHECK_THROWS_AS(decode_indices(truncated, job.q.size(), job.pmf), CorruptionError);
  CHECK_THROWS_AS(decode_indices(std::span(payload).first(3), 0, job.pmf), CorruptionError);
  payload[0] = 1;
  CHECK_THROWS_AS(decode_indices(payload, job.q.size(), job.pmf), CorruptionError);
  CHECK_THROWS_AS(encode_indices(std::vector<std::int32_t>{64}, PmfTable::uniform(64)), CorruptionError);
}

TEST_CASE("header layout is recomputed from field widths") {
  const size_t widths[] = {4, 1, 1, 2, 2, 2, 4, 8, 4};
  size_t total = 0;
  for (size_t w : widths) total += w;
  CHECK(BitstreamHeader::kBytes == total);
  CHECK(total == 28);

  BitstreamHeader h;
  h.codebook_size = 0x1234;
  h.height = 0x0506;
  h.width = 0x0708;
  h.eta_q = 0.75f;
  for (int i = 0; i < 8; ++i) h.model_hash[i] = static_cast<std::uint8_t>(0xA0 + i);
  const std::vector<std::uint8_t> payload{1, 2, 3};
  const auto bytes = pack_bitstream(h, payload);
  REQUIRE(bytes.size() == total + 3);
  CHECK(std::equal(kBitstreamMagic.begin(), kBitstreamMagic.end(), bytes.begin()));
  CHECK(bytes[4] == kBitstreamVersion);
  CHECK(bytes[5] == 0);
  CHECK(bytes[6] == 0x34);
  CHECK(bytes[7] == 0x12);
  CHECK(bytes[8] == 0x06);
  CHECK(bytes[10] == 0x08);
  float eta;
  std::memcpy(&eta, &bytes[12], 4);
  CHECK(eta == 0.75f);
  CHECK(bytes[16] == 0xA0);
  CHECK(bytes[23] == 0xA7);
  CHECK(bytes[24] == 3);
  CHECK(bytes[27] == 0);
  CHECK(std::equal(payload.begin(), payload.end(), bytes.begin() + total));

  const Bitstream bs = unpack_bitstream(bytes);
  h.payload_len = 3;
  CHECK(bs.header == h);
  CHECK(bs.payload == payload);
  CHECK_FALSE(bs.inline_pmf.has_value());
}

TEST_CASE("inline pmf round trip") {
  BitstreamHeader h;
  h.codebook_size = 5;
  h.height = h.width = 1;
  const PmfTable pmf({100, 200, 65036, 100, 100});
  const auto bytes = pack_bitstream(h, std::vector<std::uint8_t>{9}, &pmf);
  CHECK(bytes.size() == 28 + 10 + 1);
  const Bitstream bs = unpack_bitstream(bytes);
  CHECK(bs.header.flags == kFlagInlinePmf);
  REQUIRE(bs.inline_pmf.has_value());
  CHECK(*bs.inline_pmf == pmf);
  CHECK(bs.payload == std::vector<std::uint8_t>{9});
  h.codebook_size = 4;
  CHECK_THROWS_AS(pack_bitstream(h, std::vector<std::uint8_t>{9}, &pmf), FormatError);
}

TEST_CASE("unpack validation") {
  BitstreamHeader h;
  h.codebook_size = 16;
  h.height = h.width = 2;
  const auto good = pack_bitstream(h, std::vector<std::uint8_t>(7, 1));
  CHECK_NOTHROW(unpack_bitstream(good));

  auto bad = good;
  bad[0] ^= 0x20;
  CHECK_THROWS_WITH_AS(unpack_bitstream(bad), doctest::Contains("magic"), FormatError);
  bad = good;
  bad[4] = 2;
  CHECK_THROWS_WITH_AS(unpack_bitstream(bad), doctest::Contains("version"), FormatError);
  bad = good;
  bad[5] = 0x80;
  CHECK_THROWS_AS(unpack_bitstream(bad), FormatError);
  bad = good;
  bad.pop_back();
  CHECK_THROWS_WITH_AS(unpack_bitstream(bad), doctest::Contains("payload_len"), FormatError);
  bad = good;
  bad.push_back(0);
  CHECK_THROWS_AS(unpack_bitstream(bad), FormatError);
  CHECK_THROWS_AS(unpack_bitstream(std::span(good).first(20)), FormatError);
  bad = good;
  bad[6] = 1;
  bad[7] = 0;
  CHECK_THROWS_AS(unpack_bitstream(bad), FormatError);
  bad = pack_bitstream(h, std::vector<std::uint8_t>{}, nullptr);
  bad[5] = kFlagInlinePmf;
  CHECK_THROWS_AS(unpack_bitstream(bad), FormatError);
}
