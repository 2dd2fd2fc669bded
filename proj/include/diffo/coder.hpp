#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "diffo/entropy.hpp"

namespace diffo {

/// Index-channel coder selection. automatic uses an external fast coder when
/// one is configured and falls back to the reference coder otherwise.
enum class CoderKind { automatic, reference, fast };

CoderKind parse_coder_kind(const std::string& name);

/// Environment variable naming a shared library with the fast coder C ABI.
inline constexpr const char* kFastCoderLibEnv = "DIFFO_FAST_CODER_LIB";
/// Environment variable naming an executable speaking the framed protocol.
inline constexpr const char* kFastCoderBinEnv = "DIFFO_FAST_CODER_BIN";

class CoderBackend {
 public:
  virtual ~CoderBackend() = default;
  virtual std::vector<std::uint8_t> encode(std::span<const std::int32_t> symbols, const PmfTable& pmf) = 0;
  virtual std::vector<std::int32_t> decode(std::span<const std::uint8_t> payload, std::size_t count,
                                           const PmfTable& pmf) = 0;
  virtual std::string name() const = 0;
};

class ReferenceCoder final : public CoderBackend {
 public:
  std::vector<std::uint8_t> encode(std::span<const std::int32_t> symbols, const PmfTable& pmf) override;
  std::vector<std::int32_t> decode(std::span<const std::uint8_t> payload, std::size_t count,
                                   const PmfTable& pmf) override;
  std::string name() const override { return "reference"; }
};

/// In-process coder loaded with dlopen.
class LibraryCoder final : public CoderBackend {
 public:
  explicit LibraryCoder(const std::string& path);
  ~LibraryCoder() override;
  LibraryCoder(const LibraryCoder&) = delete;
  LibraryCoder& operator=(const LibraryCoder&) = delete;

  std::vector<std::uint8_t> encode(std::span<const std::int32_t> symbols, const PmfTable& pmf) override;
  std::vector<std::int32_t> decode(std::span<const std::uint8_t> payload, std::size_t count,
                                   const PmfTable& pmf) override;
  std::string name() const override { return "fast-lib:" + path_; }

 private:
  struct Impl;
  std::string path_;
  std::unique_ptr<Impl> impl_;
};

/// Out-of-process coder: a child process exchanging length-prefixed frames
/// over its stdin/stdout (see docs/fast_coder_protocol.md). The child lives
/// as long as this object.
class ProcessCoder final : public CoderBackend {
 public:
  explicit ProcessCoder(const std::string& executable);
  ~ProcessCoder() override;
  ProcessCoder(const ProcessCoder&) = delete;
  ProcessCoder& operator=(const ProcessCoder&) = delete;

  std::vector<std::uint8_t> encode(std::span<const std::int32_t> symbols, const PmfTable& pmf) override;
  std::vector<std::int32_t> decode(std::span<const std::uint8_t> payload, std::size_t count,
                                   const PmfTable& pmf) override;
  std::string name() const override { return "fast-proc:" + path_; }

 private:
  std::vector<std::uint8_t> call(const std::vector<std::uint8_t>& pmf_frame, const std::vector<std::uint8_t>& body);

  std::string path_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
};

/// Backend for the requested kind. fast throws ConfigError when neither
/// environment variable is set; automatic never throws for a missing coder.
std::unique_ptr<CoderBackend> make_coder(CoderKind kind);

namespace frame {

/// Status byte leading every response frame; values match fast_coder_abi.h.
enum Status : std::uint8_t { ok = 0, invalid_pmf = 1, corrupt = 2, bad_request = 3, too_small = 4 };

/// Reads one u32-LE-length-prefixed frame; false on clean EOF before the prefix.
bool read(int fd, std::vector<std::uint8_t>& body);
void write(int fd, std::span<const std::uint8_t> body);

/// Serves the framed protocol on (in, out) with the given coder until EOF.
/// Used by protocol servers built on any backend.
void serve(int in, int out, CoderBackend& coder);

}  // namespace frame

}  // namespace diffo
