#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lai/dataio.hpp"
#include "lai/ops.hpp"
#include "lai/rng.hpp"
#include "lai/tensor.hpp"

namespace lai {

// Dual-encoder architecture: two parallel U-net encoders (S1 branch and
// past-LAI branch), each fed the pointwise-embedded masks and the broadcast
// seasonality features, plus pixel-wise intermediate heads; one U-net decoder
// over the concatenated encoder feature maps.

struct UNetConfig {
  int depth = 3;          // pool/upsample levels
  int base_channels = 16; // doubles per level
  int in_channels = 0;
  int out_channels = 0;
};

struct ModelConfig {
  int enc_depth = 3;
  int enc_base = 16;
  int dec_depth = 2;
  int dec_base = 16;
  int feature_channels = 16;  // encoder output maps handed to the decoder
  int mask_embed = 4;         // pointwise mask conv output channels
  int season_hidden = 8;      // seasonality MLP width

  int s1_channels() const { return kTimestamps * kPolarizations; }
  int s2_channels() const { return kPastFrames; }
  int mask_channels() const { return kTimestamps * kMaskClassCount; }

  UNetConfig encoder_unet(int primary_channels) const {
    return {enc_depth, enc_base,
            primary_channels + mask_embed + season_hidden, feature_channels};
  }
  UNetConfig decoder_unet() const {
    return {dec_depth, dec_base, 2 * feature_channels, 1};
  }
};

template <typename T>
struct ConvLayer {
  Tensor<T> w;  // [Cout,Cin,kH,kW]
  Tensor<T> b;  // [Cout]
};

template <typename T>
struct DenseLayer {
  Tensor<T> w;  // [Dout,Din]
  Tensor<T> b;  // [Dout]
};

template <typename T>
struct UNetBlock {
  ConvLayer<T> conv1, conv2;  // two 3x3 conv+relu
};

template <typename T>
struct UNetParams {
  UNetConfig cfg;
  std::vector<UNetBlock<T>> down;  // one block per level, then 2x max-pool
  UNetBlock<T> mid;
  std::vector<ConvLayer<T>> up;    // nearest-2x then 3x3 conv, per level
  std::vector<UNetBlock<T>> dec;   // post-skip-concat blocks, per level
  ConvLayer<T> out;                // 1x1 base -> out_channels
};

template <typename T>
struct EncoderParams {
  int primary_channels = 0;   // 6 for the S1 branch, 2 for the past-LAI branch
  ConvLayer<T> mask_pw;       // 1x1, 18 -> mask_embed
  DenseLayer<T> season_fc1;   // 2 -> hidden
  DenseLayer<T> season_fc2;   // hidden -> hidden
  UNetParams<T> unet;
  ConvLayer<T> head;          // 1x1 features -> 1
};

template <typename T>
struct ModelParams {
  ModelConfig cfg;
  EncoderParams<T> enc1;  // S1 branch
  EncoderParams<T> enc2;  // past-LAI branch
  UNetParams<T> dec;
};

enum class EncoderId { kEnc1 = 1, kEnc2 = 2 };

inline const char* encoder_prefix(EncoderId id) {
  return id == EncoderId::kEnc1 ? "enc1" : "enc2";
}

// ---- construction ----------------------------------------------------

template <typename T>
UNetParams<T> make_unet(const UNetConfig& cfg, Rng& rng);

template <typename T>
EncoderParams<T> make_encoder(const ModelConfig& cfg, EncoderId id, Rng& rng);

template <typename T>
ModelParams<T> make_model(const ModelConfig& cfg, std::uint64_t seed);

// ---- named parameter traversal ----------------------------------------

template <typename T>
using NamedParamsT = std::vector<std::pair<std::string, Tensor<T>>>;
using NamedParams = NamedParamsT<float>;

template <typename T>
NamedParamsT<T> named_params(UNetParams<T>& p, const std::string& prefix);
template <typename T>
NamedParamsT<T> named_params(EncoderParams<T>& p, const std::string& prefix);
template <typename T>
NamedParamsT<T> named_params(ModelParams<T>& p);

template <typename T>
std::size_t param_count(NamedParamsT<T> params) {
  std::size_t n = 0;
  for (auto& [name, t] : params) n += t.numel();
  return n;
}

template <typename T>
void set_requires_grad(NamedParamsT<T> params, bool v) {
  for (auto& [name, t] : params) t.set_requires_grad(v);
}

// ---- batch assembly ----------------------------------------------------

template <typename T>
struct Batch {
  Tensor<T> s1;      // [N,6,H,W]
  Tensor<T> s2;      // [N,2,H,W]
  Tensor<T> masks;   // [N,18,H,W] one-hot
  Tensor<T> season;  // [N,2] (sin, cos)
  Tensor<T> target;  // [N,1,H,W] native LAI
  Tensor<T> valid;   // [N,1,H,W] target-frame validity
};

// Ablation switches: zeroed inputs keep the architecture intact while
// removing the information (validity is a loss concern and stays real).
struct BatchOptions {
  bool use_masks = true;
  bool use_season = true;
};

template <typename T>
Batch<T> assemble_batch(std::span<const SceneSample> samples,
                        std::span<const int> indices,
                        const BatchOptions& opt = {});

// ---- forward passes ----------------------------------------------------

template <typename T>
Tensor<T> unet_forward(const UNetParams<T>& p, const Tensor<T>& x);

template <typename T>
struct EncoderOut {
  Tensor<T> features;  // [N,F,H,W]
  Tensor<T> head;      // [N,1,H,W] intermediate LAI prediction
};

template <typename T>
EncoderOut<T> encoder_forward(const EncoderParams<T>& p,
                              const Tensor<T>& primary,
                              const Tensor<T>& masks_onehot,
                              const Tensor<T>& season);

template <typename T>
Tensor<T> decoder_forward(const UNetParams<T>& dec, const Tensor<T>& f1,
                          const Tensor<T>& f2);

template <typename T>
struct ModelOut {
  Tensor<T> dec;        // final LAI map
  Tensor<T> enc1_head;
  Tensor<T> enc2_head;
};

template <typename T>
ModelOut<T> full_forward(const ModelParams<T>& m, const Batch<T>& batch);

template <typename T>
const Tensor<T>& encoder_input(const Batch<T>& batch, EncoderId id) {
  return id == EncoderId::kEnc1 ? batch.s1 : batch.s2;
}

// ---- checkpoints ---------------------------------------------------------
// Same container conventions as a TilePack: manifest.json with parameter
// names and shapes plus one params.bin f32le blob in manifest order.

struct CheckpointMeta {
  std::string model_kind;  // "encoder1" | "encoder2" | "full"
  ModelConfig cfg;
  NormStats stats;
};

void save_checkpoint(const std::filesystem::path& dir,
                     const CheckpointMeta& meta, const NamedParams& params);

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& dir);

// Copies checkpoint values into matching target parameters. Strict mode
// requires the name sets to coincide; partial mode lets the checkpoint be a
// subset (encoder-only into a full model). Name or shape mismatch raises
// CheckpointMismatchError listing the offending keys.
void load_checkpoint_params(const std::filesystem::path& dir,
                            NamedParams target, bool allow_partial = false);

}  // namespace lai
