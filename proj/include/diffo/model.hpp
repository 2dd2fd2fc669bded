#pragma once

#include <string>

#include "diffo/autoencoder.hpp"
#include "diffo/bitstream.hpp"
#include "diffo/entropy.hpp"
#include "diffo/fusion_unet.hpp"
#include "diffo/kv.hpp"
#include "diffo/vq.hpp"

namespace diffo {

/// Everything that defines one rate point: architecture, codebook size and
/// the diffusion constants used at training and inference time.
struct ModelConfig {
  AutoencoderConfig autoencoder;
  Index codebook_size = 256;
  UNetConfig unet;
  double kappa = 1.0;
  /// Shift of the distortion-robust training step (t = 1).
  double eta_small = 0.05;
  /// Shift of the perceptual training step (t = 2) and default eta_q.
  double eta_large = 0.9;
  /// U-Net step index used by one-step decoding.
  Index inference_step = 2;
  double beta = 0.25;

  void validate() const;
  KeyValues to_kv() const;
  /// Missing keys keep their defaults.
  static ModelConfig from_kv(const KeyValues& kv);
};

/// Encoder, codebook, fusion U-Net, decoder and the static index PMF.
template <typename Scalar>
class Model {
 public:
  Model() = default;
  explicit Model(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  Encoder<Scalar>& encoder() { return encoder_; }
  const Encoder<Scalar>& encoder() const { return encoder_; }
  Decoder<Scalar>& decoder() { return decoder_; }
  const Decoder<Scalar>& decoder() const { return decoder_; }
  Codebook<Scalar>& codebook() { return codebook_; }
  const Codebook<Scalar>& codebook() const { return codebook_; }
  FusionUNet<Scalar>& unet() { return unet_; }
  const FusionUNet<Scalar>& unet() const { return unet_; }
  const PmfTable& pmf() const { return pmf_; }
  void set_pmf(PmfTable pmf);

  /// All trainable tensors in a fixed order with stable names.
  ParamList<Scalar> params() const;
  /// First 8 bytes of SHA-256 over the serialized parameters and PMF.
  ModelHash hash() const;

  /// U-Net step index for a reverse-chain shift eta: the perceptual step above
  /// the geometric mean of the two training shifts, the distortion step below.
  Index unet_step_for(double eta) const;

 private:
  ModelConfig config_;
  Encoder<Scalar> encoder_;
  Decoder<Scalar> decoder_;
  Codebook<Scalar> codebook_;
  FusionUNet<Scalar> unet_;
  PmfTable pmf_;
};

/// Binary checkpoint: magic, config text, named float32 tensors, PMF, hash.
void save_checkpoint(const std::string& path, const Model<float>& model);
/// Verifies the stored hash against the loaded contents (CorruptionError).
Model<float> load_checkpoint(const std::string& path);

std::string hash_hex(const ModelHash& hash);

}  // namespace diffo
