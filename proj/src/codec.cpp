#include "diffo/codec.hpp"

#include <cmath>
#include <limits>

#include "diffo/rate_modulation.hpp"

namespace diffo {

Compressed compress(const Image& image, const Model<float>& model, const CompressOptions& options) {
  const ModelConfig& cfg = model.config();
  const Index f = cfg.autoencoder.downsample_factor;
  check_image_shape(image.shape(), f);
  if (image.n() != 1) throw ShapeError("compress takes one image at a time, got " + image.shape().str());
  const Index h = image.h() / f;
  const Index w = image.w() / f;
  if (h > 0xFFFF || w > 0xFFFF) throw ShapeError("latent grid too large for the bitstream header");

  Compressed out;
  out.indices = quantize(model.encoder().encode(image), model.codebook()).indices;
  const double pixels = static_cast<double>(image.h() * image.w());
  out.report.estimated_bpp = estimate_bits(out.indices.q, model.pmf()) / pixels;

  double eta = cfg.eta_large;
  if (options.eta) {
    eta = *options.eta;
  } else if (options.rate_model) {
    eta = select_eta(out.report.estimated_bpp, *options.rate_model);
  }
  if (!(eta > 0.0 && eta <= 1.0)) throw ConfigError("eta_q must be in (0, 1], got " + std::to_string(eta));

  BitstreamHeader header;
  header.codebook_size = static_cast<std::uint16_t>(cfg.codebook_size);
  header.height = static_cast<std::uint16_t>(h);
  header.width = static_cast<std::uint16_t>(w);
  header.eta_q = static_cast<float>(eta);
  header.model_hash = options.model_hash ? *options.model_hash : model.hash();
  out.eta_q = header.eta_q;

  ReferenceCoder reference;
  CoderBackend& coder = options.coder ? *options.coder : reference;
  const std::vector<std::uint8_t> payload = coder.encode(out.indices.q, model.pmf());
  out.bytes = pack_bitstream(header, payload, options.inline_pmf ? &model.pmf() : nullptr);
  out.report.payload_bytes = payload.size();
  out.report.header_bytes = out.bytes.size() - payload.size();
  out.report.actual_bpp = 8.0 * static_cast<double>(out.bytes.size()) / pixels;
  return out;
}

Tensor<float> denoise_latent(const Tensor<float>& y, const Model<float>& model, double eta_q, Index steps,
                             std::uint64_t seed, SampleMode mode, double eta_p) {
  if (steps < 0) throw ConfigError("step count must be >= 0");
  if (steps == 0) return y;
  const ModelConfig& cfg = model.config();
  Rng rng(seed);
  if (steps == 1) {
    const SingleStepParams params{eta_q, eta_p, cfg.kappa};
    const Tensor<float> x_tilde = decoder_noisy_input(y, params, rng);
    const Denoiser<float> f = [&](const Tensor<float>& xt, const Tensor<float>& base, Index, double) {
      return model.unet().denoise(xt, base, cfg.inference_step);
    };
    return single_step_decode(y, x_tilde, params, f, mode, rng);
  }
  if (!(eta_q > kChainEtaMin)) throw ScheduleError("multi-step decoding needs eta_q > 0.001");
  const NoiseSchedule schedule = NoiseSchedule::geometric(steps, kChainEtaMin, eta_q, cfg.kappa);
  const Denoiser<float> f = [&](const Tensor<float>& xt, const Tensor<float>& base, Index, double eta) {
    return model.unet().denoise(xt, base, model.unet_step_for(eta));
  };
  return sample_chain(y, schedule, f, mode, rng);
}

Decompressed decompress(std::span<const std::uint8_t> bytes, const Model<float>& model,
                        const DecompressOptions& options) {
  Bitstream bs = unpack_bitstream(bytes);
  const ModelConfig& cfg = model.config();
  const ModelHash expected = options.model_hash ? *options.model_hash : model.hash();
  if (bs.header.model_hash != expected && !options.force) {
    throw HashMismatchError("model hash mismatch: bitstream was written by model " + hash_hex(bs.header.model_hash) +
                            ", loaded model is " + hash_hex(expected) + " (use --force to decode anyway)");
  }
  if (bs.header.codebook_size != cfg.codebook_size) {
    throw FormatError("bitstream codebook size " + std::to_string(bs.header.codebook_size) +
                      " does not match the model's " + std::to_string(cfg.codebook_size));
  }
  if (bs.header.height == 0 || bs.header.width == 0) throw FormatError("bitstream has an empty latent grid");
  const PmfTable& pmf = bs.inline_pmf ? *bs.inline_pmf : model.pmf();

  Decompressed out;
  out.header = bs.header;
  out.indices.n = 1;
  out.indices.h = bs.header.height;
  out.indices.w = bs.header.width;
  ReferenceCoder reference;
  CoderBackend& coder = options.coder ? *options.coder : reference;
  out.indices.q = coder.decode(bs.payload, static_cast<std::size_t>(out.indices.h * out.indices.w), pmf);

  const Tensor<float> y = lookup(out.indices, model.codebook());
  const Tensor<float> x_hat =
      denoise_latent(y, model, bs.header.eta_q, options.steps, options.seed, options.mode, options.eta_p);
  out.image = model.decoder().decode(x_hat);
  return out;
}

}  // namespace diffo
