#include "diffo/model.hpp"

#include <openssl/sha.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace diffo {

void ModelConfig::validate() const {
  autoencoder.validate();
  unet.validate();
  if (unet.latent_dim != autoencoder.latent_dim) throw ConfigError("U-Net and autoencoder latent_dim differ");
  if (codebook_size < 2 || codebook_size > 65535) throw ConfigError("codebook_size must be in [2, 65535]");
  if (!(kappa >= 0.0)) throw ConfigError("kappa must be >= 0");
  if (!(eta_small > 0.0 && eta_small < eta_large && eta_large <= 1.0)) {
    throw ConfigError("need 0 < eta_small < eta_large <= 1");
  }
  if (inference_step != 1 && inference_step != 2) throw ConfigError("inference_step must be 1 or 2");
  if (!(beta >= 0.0)) throw ConfigError("beta must be >= 0");
}

KeyValues ModelConfig::to_kv() const {
  KeyValues kv;
  kv.set("downsample_factor", static_cast<std::int64_t>(autoencoder.downsample_factor));
  kv.set("channel_width", static_cast<std::int64_t>(autoencoder.channel_width));
  kv.set("latent_dim", static_cast<std::int64_t>(autoencoder.latent_dim));
  kv.set("num_res_blocks", static_cast<std::int64_t>(autoencoder.num_res_blocks));
  kv.set("min_width", static_cast<std::int64_t>(autoencoder.min_width));
  kv.set("seed", static_cast<std::int64_t>(autoencoder.seed));
  kv.set("codebook_size", static_cast<std::int64_t>(codebook_size));
  kv.set("unet_base_width", static_cast<std::int64_t>(unet.base_width));
  kv.set("unet_num_scales", static_cast<std::int64_t>(unet.num_scales));
  kv.set("unet_blocks_per_scale", static_cast<std::int64_t>(unet.blocks_per_scale));
  kv.set("unet_time_embed_dim", static_cast<std::int64_t>(unet.time_embed_dim));
  kv.set("kappa", kappa);
  kv.set("eta_small", eta_small);
  kv.set("eta_large", eta_large);
  kv.set("inference_step", static_cast<std::int64_t>(inference_step));
  kv.set("beta", beta);
  return kv;
}

ModelConfig ModelConfig::from_kv(const KeyValues& kv) {
  ModelConfig c;
  auto& ae = c.autoencoder;
  ae.downsample_factor = kv.get_int("downsample_factor", ae.downsample_factor);
  ae.channel_width = kv.get_int("channel_width", ae.channel_width);
  ae.latent_dim = kv.get_int("latent_dim", ae.latent_dim);
  ae.num_res_blocks = kv.get_int("num_res_blocks", ae.num_res_blocks);
  ae.min_width = kv.get_int("min_width", ae.min_width);
  ae.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<std::int64_t>(ae.seed)));
  c.codebook_size = kv.get_int("codebook_size", c.codebook_size);
  c.unet.latent_dim = ae.latent_dim;
  c.unet.base_width = kv.get_int("unet_base_width", c.unet.base_width);
  c.unet.num_scales = kv.get_int("unet_num_scales", c.unet.num_scales);
  c.unet.blocks_per_scale = kv.get_int("unet_blocks_per_scale", c.unet.blocks_per_scale);
  c.unet.time_embed_dim = kv.get_int("unet_time_embed_dim", c.unet.time_embed_dim);
  c.kappa = kv.get_double("kappa", c.kappa);
  c.eta_small = kv.get_double("eta_small", c.eta_small);
  c.eta_large = kv.get_double("eta_large", c.eta_large);
  c.inference_step = kv.get_int("inference_step", c.inference_step);
  c.beta = kv.get_double("beta", c.beta);
  c.validate();
  return c;
}

template <typename Scalar>
Model<Scalar>::Model(const ModelConfig& config) : config_(config) {
  config_.unet.latent_dim = config_.autoencoder.latent_dim;
  config_.unet.seed = config_.autoencoder.seed + 1;
  config_.validate();
  std::tie(encoder_, decoder_) = build_autoencoder<Scalar>(config_.autoencoder);
  codebook_ = Codebook<Scalar>(config_.codebook_size, config_.autoencoder.latent_dim);
  unet_ = FusionUNet<Scalar>(config_.unet);
  pmf_ = PmfTable::uniform(config_.codebook_size);
}

template <typename Scalar>
void Model<Scalar>::set_pmf(PmfTable pmf) {
  if (pmf.size() != config_.codebook_size) {
    throw ConfigError("PMF has " + std::to_string(pmf.size()) + " symbols, codebook has " +
                      std::to_string(config_.codebook_size));
  }
  pmf_ = std::move(pmf);
}

template <typename Scalar>
ParamList<Scalar> Model<Scalar>::params() const {
  ParamList<Scalar> p;
  encoder_.collect(p, "encoder");
  codebook_.collect(p, "codebook");
  unet_.collect(p, "unet");
  decoder_.collect(p, "decoder");
  return p;
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>(v >> (8 * i)));
}

void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

// Canonical little-endian serialization of parameters and PMF; the hash and
// the checkpoint body share it.
template <typename Scalar>
std::string serialize_body(const Model<Scalar>& model) {
  std::string out;
  const auto params = model.params();
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, var] : params) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    const Shape s = var.shape();
    for (Index d : {s.n, s.c, s.h, s.w}) put_u32(out, static_cast<std::uint32_t>(d));
    const auto& data = var.value().array();
    for (Index i = 0; i < data.size(); ++i) put_f32(out, static_cast<float>(data[i]));
  }
  const auto& freq = model.pmf().frequencies();
  put_u32(out, static_cast<std::uint32_t>(freq.size()));
  for (std::uint32_t f : freq) put_u32(out, f);
  return out;
}

ModelHash digest(const std::string& body) {
  unsigned char full[SHA256_DIGEST_LENGTH];
  SHA256(reinterpret_cast<const unsigned char*>(body.data()), body.size(), full);
  ModelHash h;
  std::copy(full, full + h.size(), h.begin());
  return h;
}

constexpr char kCheckpointMagic[8] = {'D', 'F', 'O', 'C', 'K', 'P', 'T', '1'};

class Cursor {
 public:
  Cursor(const std::string& data, const std::string& path) : data_(data), path_(path) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw CorruptionError("checkpoint " + path_ + " is truncated");
  }
  const std::string& data_;
  const std::string& path_;
  std::size_t pos_ = 0;
};

}  // namespace

template <typename Scalar>
ModelHash Model<Scalar>::hash() const {
  return digest(serialize_body(*this));
}

template <typename Scalar>
Index Model<Scalar>::unet_step_for(double eta) const {
  return eta >= std::sqrt(config_.eta_small * config_.eta_large) ? 2 : 1;
}

template class Model<float>;
template class Model<double>;

void save_checkpoint(const std::string& path, const Model<float>& model) {
  const std::string config = model.config().to_kv().str();
  const std::string body = serialize_body(model);
  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  put_u32(out, static_cast<std::uint32_t>(config.size()));
  out += config;
  out += body;
  const ModelHash h = digest(body);
  out.append(reinterpret_cast<const char*>(h.data()), h.size());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw ConfigError("cannot write checkpoint " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw ConfigError("failed writing checkpoint " + path);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw ConfigError("cannot move checkpoint into place: " + path);
}

Model<float> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open checkpoint " + path);
  const std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Cursor in(data, path);
  if (in.bytes(sizeof kCheckpointMagic) != std::string(kCheckpointMagic, sizeof kCheckpointMagic)) {
    throw FormatError(path + " is not a diffo checkpoint");
  }
  const std::uint32_t config_len = in.u32();
  Model<float> model(ModelConfig::from_kv(KeyValues::parse(in.bytes(config_len), path)));
  const std::size_t body_start = in.pos();

  auto params = model.params();
  const std::uint32_t count = in.u32();
  if (count != params.size()) {
    throw CorruptionError("checkpoint " + path + " holds " + std::to_string(count) + " tensors, config expects " +
                          std::to_string(params.size()));
  }
  for (auto& [name, var] : params) {
    const std::string stored = in.bytes(in.u32());
    if (stored != name) throw CorruptionError("checkpoint tensor '" + stored + "' where '" + name + "' was expected");
    Shape s;
    s.n = in.u32();
    s.c = in.u32();
    s.h = in.u32();
    s.w = in.u32();
    if (!(s == var.shape())) throw CorruptionError("checkpoint tensor " + name + " has shape " + s.str());
    auto& dst = var.mutable_value().array();
    for (Index i = 0; i < dst.size(); ++i) dst[i] = in.f32();
  }
  std::vector<std::uint32_t> freq(in.u32());
  for (auto& v : freq) v = in.u32();
  try {
    model.set_pmf(PmfTable(std::move(freq)));
  } catch (const ConfigError& e) {
    throw CorruptionError("checkpoint " + path + " has an invalid PMF: " + e.what());
  }
  const std::size_t body_end = in.pos();
  const std::string stored_hash = in.bytes(8);
  if (in.remaining() != 0) throw CorruptionError("trailing bytes in checkpoint " + path);
  const ModelHash h = digest(data.substr(body_start, body_end - body_start));
  if (std::memcmp(h.data(), stored_hash.data(), 8) != 0) {
    throw CorruptionError("checkpoint " + path + " fails its integrity hash");
  }
  return model;
}

std::string hash_hex(const ModelHash& hash) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  for (std::uint8_t b : hash) {
    out.push_back(digits[b >> 4]);
    out.push_back(digits[b & 15]);
  }
  return out;
}

}  // namespace diffo
