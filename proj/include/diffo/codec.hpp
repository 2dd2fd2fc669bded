#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "diffo/bitstream.hpp"
#include "diffo/coder.hpp"
#include "diffo/diffusion.hpp"
#include "diffo/image_io.hpp"
#include "diffo/model.hpp"

namespace diffo {

struct RateModel;

struct RateReport {
  /// Ideal code length of the indices per pixel.
  double estimated_bpp = 0.0;
  /// Whole file (header, inline PMF, payload) per pixel.
  double actual_bpp = 0.0;
  std::size_t payload_bytes = 0;
  /// Header plus inline PMF.
  std::size_t header_bytes = 0;
};

struct CompressOptions {
  /// Explicit eta_q; otherwise the rate model picks one, otherwise eta_large.
  std::optional<double> eta;
  const RateModel* rate_model = nullptr;
  bool inline_pmf = false;
  /// Coder to use; nullptr selects the reference coder.
  CoderBackend* coder = nullptr;
  /// Precomputed model.hash(), to keep hashing out of timed loops.
  std::optional<ModelHash> model_hash;
};

struct Compressed {
  std::vector<std::uint8_t> bytes;
  RateReport report;
  IndexGrid indices;
  double eta_q = 0.0;
};

/// Encodes a (1, 3, H, W) image with H, W multiples of f.
Compressed compress(const Image& image, const Model<float>& model, const CompressOptions& options = {});

struct DecompressOptions {
  std::uint64_t seed = 0;
  /// 0: decode the codebook latent directly; 1: one fusion-U-Net step;
  /// n > 1: reverse chain over a geometric schedule ending at eta_q.
  Index steps = 1;
  /// Decode even when the stream names a different model.
  bool force = false;
  SampleMode mode = SampleMode::deterministic;
  double eta_p = 0.0;
  CoderBackend* coder = nullptr;
  std::optional<ModelHash> model_hash;
};

struct Decompressed {
  Image image;
  IndexGrid indices;
  BitstreamHeader header;
};

/// Throws HashMismatchError when the stream's model hash differs (unless force).
Decompressed decompress(std::span<const std::uint8_t> bytes, const Model<float>& model,
                        const DecompressOptions& options = {});

/// Latent reconstruction from a codebook latent y for the given step count.
Tensor<float> denoise_latent(const Tensor<float>& y, const Model<float>& model, double eta_q, Index steps,
                             std::uint64_t seed, SampleMode mode = SampleMode::deterministic, double eta_p = 0.0);

/// Smallest eta of a multi-step chain.
inline constexpr double kChainEtaMin = 0.001;

}  // namespace diffo
