#include "lai/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "json.hpp"

namespace lai {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Kaiming fan-in init, zero biases; elements drawn in row-major order so a
// fixed seed rebuilds identical parameters.
template <typename T>
ConvLayer<T> make_conv(int cout, int cin, int k, Rng& rng) {
  const double std = std::sqrt(2.0 / (static_cast<double>(cin) * k * k));
  std::vector<T> w(static_cast<std::size_t>(cout) * cin * k * k);
  for (auto& v : w) v = static_cast<T>(rng.normal(0.0, std));
  ConvLayer<T> layer;
  layer.w = Tensor<T>::from_data({cout, cin, k, k}, std::move(w));
  layer.b = Tensor<T>::zeros({cout});
  layer.w.set_requires_grad(true);
  layer.b.set_requires_grad(true);
  return layer;
}

template <typename T>
DenseLayer<T> make_dense(int dout, int din, Rng& rng) {
  const double std = std::sqrt(2.0 / static_cast<double>(din));
  std::vector<T> w(static_cast<std::size_t>(dout) * din);
  for (auto& v : w) v = static_cast<T>(rng.normal(0.0, std));
  DenseLayer<T> layer;
  layer.w = Tensor<T>::from_data({dout, din}, std::move(w));
  layer.b = Tensor<T>::zeros({dout});
  layer.w.set_requires_grad(true);
  layer.b.set_requires_grad(true);
  return layer;
}

template <typename T>
Tensor<T> conv_relu(const Tensor<T>& x, const ConvLayer<T>& c) {
  return relu(conv2d(x, c.w, c.b, 1, 1));
}

template <typename T>
void push(NamedParamsT<T>& out, const std::string& name, Tensor<T> t) {
  out.emplace_back(name, std::move(t));
}

template <typename T>
void append(NamedParamsT<T>& out, NamedParamsT<T> more) {
  for (auto& p : more) out.push_back(std::move(p));
}

}  // namespace

template <typename T>
UNetParams<T> make_unet(const UNetConfig& cfg, Rng& rng) {
  if (cfg.depth < 1) throw ContractError("unet depth must be >= 1");
  if (cfg.base_channels < 1 || cfg.in_channels < 1 || cfg.out_channels < 1)
    throw ContractError("unet channel counts must be >= 1");
  UNetParams<T> p;
  p.cfg = cfg;
  int in = cfg.in_channels;
  for (int i = 0; i < cfg.depth; ++i) {
    const int c = cfg.base_channels << i;
    p.down.push_back({make_conv<T>(c, in, 3, rng), make_conv<T>(c, c, 3, rng)});
    in = c;
  }
  const int mid_c = cfg.base_channels << cfg.depth;
  p.mid = {make_conv<T>(mid_c, in, 3, rng), make_conv<T>(mid_c, mid_c, 3, rng)};
  p.up.resize(cfg.depth);
  p.dec.resize(cfg.depth);
  for (int i = cfg.depth - 1; i >= 0; --i) {
    const int c = cfg.base_channels << i;
    p.up[i] = make_conv<T>(c, c * 2, 3, rng);
    p.dec[i] = {make_conv<T>(c, c * 2, 3, rng), make_conv<T>(c, c, 3, rng)};
  }
  p.out = make_conv<T>(cfg.out_channels, cfg.base_channels, 1, rng);
  return p;
}

template <typename T>
EncoderParams<T> make_encoder(const ModelConfig& cfg, EncoderId id, Rng& rng) {
  EncoderParams<T> e;
  e.primary_channels =
      id == EncoderId::kEnc1 ? cfg.s1_channels() : cfg.s2_channels();
  e.mask_pw = make_conv<T>(cfg.mask_embed, cfg.mask_channels(), 1, rng);
  e.season_fc1 = make_dense<T>(cfg.season_hidden, 2, rng);
  e.season_fc2 = make_dense<T>(cfg.season_hidden, cfg.season_hidden, rng);
  e.unet = make_unet<T>(cfg.encoder_unet(e.primary_channels), rng);
  e.head = make_conv<T>(1, cfg.feature_channels, 1, rng);
  return e;
}

template <typename T>
ModelParams<T> make_model(const ModelConfig& cfg, std::uint64_t seed) {
  Rng rng(mix64(seed));
  ModelParams<T> m;
  m.cfg = cfg;
  m.enc1 = make_encoder<T>(cfg, EncoderId::kEnc1, rng);
  m.enc2 = make_encoder<T>(cfg, EncoderId::kEnc2, rng);
  m.dec = make_unet<T>(cfg.decoder_unet(), rng);
  return m;
}

template <typename T>
NamedParamsT<T> named_params(UNetParams<T>& p, const std::string& prefix) {
  NamedParamsT<T> out;
  for (std::size_t i = 0; i < p.down.size(); ++i) {
    push(out, prefix + ".down" + std::to_string(i) + ".conv1.w", p.down[i].conv1.w);
    push(out, prefix + ".down" + std::to_string(i) + ".conv1.b", p.down[i].conv1.b);
    push(out, prefix + ".down" + std::to_string(i) + ".conv2.w", p.down[i].conv2.w);
    push(out, prefix + ".down" + std::to_string(i) + ".conv2.b", p.down[i].conv2.b);
  }
  push(out, prefix + ".mid.conv1.w", p.mid.conv1.w);
  push(out, prefix + ".mid.conv1.b", p.mid.conv1.b);
  push(out, prefix + ".mid.conv2.w", p.mid.conv2.w);
  push(out, prefix + ".mid.conv2.b", p.mid.conv2.b);
  for (std::size_t i = 0; i < p.up.size(); ++i) {
    push(out, prefix + ".up" + std::to_string(i) + ".w", p.up[i].w);
    push(out, prefix + ".up" + std::to_string(i) + ".b", p.up[i].b);
    push(out, prefix + ".dec" + std::to_string(i) + ".conv1.w", p.dec[i].conv1.w);
    push(out, prefix + ".dec" + std::to_string(i) + ".conv1.b", p.dec[i].conv1.b);
    push(out, prefix + ".dec" + std::to_string(i) + ".conv2.w", p.dec[i].conv2.w);
    push(out, prefix + ".dec" + std::to_string(i) + ".conv2.b", p.dec[i].conv2.b);
  }
  push(out, prefix + ".out.w", p.out.w);
  push(out, prefix + ".out.b", p.out.b);
  return out;
}

template <typename T>
NamedParamsT<T> named_params(EncoderParams<T>& p, const std::string& prefix) {
  NamedParamsT<T> out;
  push(out, prefix + ".mask_pw.w", p.mask_pw.w);
  push(out, prefix + ".mask_pw.b", p.mask_pw.b);
  push(out, prefix + ".season_fc1.w", p.season_fc1.w);
  push(out, prefix + ".season_fc1.b", p.season_fc1.b);
  push(out, prefix + ".season_fc2.w", p.season_fc2.w);
  push(out, prefix + ".season_fc2.b", p.season_fc2.b);
  append(out, named_params(p.unet, prefix + ".unet"));
  push(out, prefix + ".head.w", p.head.w);
  push(out, prefix + ".head.b", p.head.b);
  return out;
}

template <typename T>
NamedParamsT<T> named_params(ModelParams<T>& p) {
  NamedParamsT<T> out;
  append(out, named_params(p.enc1, "enc1"));
  append(out, named_params(p.enc2, "enc2"));
  append(out, named_params(p.dec, "dec.unet"));
  return out;
}

template <typename T>
Batch<T> assemble_batch(std::span<const SceneSample> samples,
                        std::span<const int> indices,
                        const BatchOptions& opt) {
  if (indices.empty()) throw ContractError("assemble_batch: empty batch");
  const int n = static_cast<int>(indices.size());
  const int t = samples[static_cast<std::size_t>(indices[0])].tile;
  const std::size_t plane = static_cast<std::size_t>(t) * t;

  Batch<T> b;
  b.s1 = Tensor<T>::zeros({n, kTimestamps * kPolarizations, t, t});
  b.s2 = Tensor<T>::zeros({n, kPastFrames, t, t});
  b.masks = Tensor<T>::zeros({n, kTimestamps * kMaskClassCount, t, t});
  b.season = Tensor<T>::zeros({n, 2});
  b.target = Tensor<T>::zeros({n, 1, t, t});
  b.valid = Tensor<T>::zeros({n, 1, t, t});

  for (int i = 0; i < n; ++i) {
    const SceneSample& s = samples[static_cast<std::size_t>(indices[i])];
    if (s.tile != t)
      throw ContractError("assemble_batch: mixed tile sizes in batch");
    std::copy(s.s1.begin(), s.s1.end(),
              b.s1.data().begin() + static_cast<std::size_t>(i) * s.s1.size());
    std::copy(s.s2_lai_past.begin(), s.s2_lai_past.end(),
              b.s2.data().begin() +
                  static_cast<std::size_t>(i) * s.s2_lai_past.size());
    if (opt.use_masks) {
      Tensor<T> oh = one_hot_masks<T>(s.masks.data(), kTimestamps, t, t);
      std::copy(oh.data().begin(), oh.data().end(),
                b.masks.data().begin() + static_cast<std::size_t>(i) * oh.numel());
    }
    if (opt.use_season) {
      const Seasonality se = seasonality_features(s.day_of_year);
      b.season.data()[static_cast<std::size_t>(i) * 2] =
          static_cast<T>(se.sin_component);
      b.season.data()[static_cast<std::size_t>(i) * 2 + 1] =
          static_cast<T>(se.cos_component);
    }
    std::copy(s.lai_target.begin(), s.lai_target.end(),
              b.target.data().begin() + static_cast<std::size_t>(i) * plane);
    Tensor<T> vm = valid_pixel_mask<T>(
        s.masks.data() + std::size_t(kTimestamps - 1) * plane, t, t);
    std::copy(vm.data().begin(), vm.data().end(),
              b.valid.data().begin() + static_cast<std::size_t>(i) * plane);
  }
  return b;
}

template <typename T>
Tensor<T> unet_forward(const UNetParams<T>& p, const Tensor<T>& x) {
  if (x.dim(1) != p.cfg.in_channels)
    throw ContractError("unet_forward: input has " + std::to_string(x.dim(1)) +
                        " channels, config expects " +
                        std::to_string(p.cfg.in_channels));
  const int div = 1 << p.cfg.depth;
  if (x.dim(2) % div != 0 || x.dim(3) % div != 0)
    throw GeometryError("unet_forward: spatial dims " + shape_str(x.shape()) +
                        " not divisible by 2^depth=" + std::to_string(div));
  std::vector<Tensor<T>> skips;
  Tensor<T> h = x;
  for (const auto& block : p.down) {
    h = conv_relu(h, block.conv1);
    h = conv_relu(h, block.conv2);
    skips.push_back(h);
    h = max_pool2d(h, 2);
  }
  h = conv_relu(h, p.mid.conv1);
  h = conv_relu(h, p.mid.conv2);
  for (int i = p.cfg.depth - 1; i >= 0; --i) {
    h = upsample_nearest2x(h);
    h = conv_relu(h, p.up[static_cast<std::size_t>(i)]);
    h = concat_channels<T>({skips[static_cast<std::size_t>(i)], h});
    h = conv_relu(h, p.dec[static_cast<std::size_t>(i)].conv1);
    h = conv_relu(h, p.dec[static_cast<std::size_t>(i)].conv2);
  }
  return conv2d(h, p.out.w, p.out.b, 1, 0);
}

template <typename T>
EncoderOut<T> encoder_forward(const EncoderParams<T>& p,
                              const Tensor<T>& primary,
                              const Tensor<T>& masks_onehot,
                              const Tensor<T>& season) {
  if (primary.dim(1) != p.primary_channels)
    throw ContractError("encoder_forward: primary input has " +
                        std::to_string(primary.dim(1)) +
                        " channels, encoder expects " +
                        std::to_string(p.primary_channels));
  if (masks_onehot.dim(1) != p.mask_pw.w.dim(1))
    throw ContractError("encoder_forward: mask channels mismatch");
  if (season.ndim() != 2 || season.dim(1) != 2 ||
      season.dim(0) != primary.dim(0))
    throw ContractError("encoder_forward: season must be [N,2]");
  const int h = primary.dim(2), w = primary.dim(3);
  Tensor<T> m = conv2d(masks_onehot, p.mask_pw.w, p.mask_pw.b, 1, 0);
  Tensor<T> s = linear(season, p.season_fc1.w, p.season_fc1.b);
  s = relu(s);
  s = linear(s, p.season_fc2.w, p.season_fc2.b);
  Tensor<T> smap = broadcast_spatial(s, h, w);
  Tensor<T> joined = concat_channels<T>({primary, m, smap});
  EncoderOut<T> out;
  out.features = unet_forward(p.unet, joined);
  out.head = conv2d(out.features, p.head.w, p.head.b, 1, 0);
  return out;
}

template <typename T>
Tensor<T> decoder_forward(const UNetParams<T>& dec, const Tensor<T>& f1,
                          const Tensor<T>& f2) {
  if (f1.shape() != f2.shape())
    throw ContractError("decoder_forward: encoder features differ in shape " +
                        shape_str(f1.shape()) + " vs " + shape_str(f2.shape()));
  return unet_forward(dec, concat_channels<T>({f1, f2}));
}

template <typename T>
ModelOut<T> full_forward(const ModelParams<T>& m, const Batch<T>& batch) {
  EncoderOut<T> e1 =
      encoder_forward(m.enc1, batch.s1, batch.masks, batch.season);
  EncoderOut<T> e2 =
      encoder_forward(m.enc2, batch.s2, batch.masks, batch.season);
  ModelOut<T> out;
  out.dec = decoder_forward(m.dec, e1.features, e2.features);
  out.enc1_head = e1.head;
  out.enc2_head = e2.head;
  return out;
}

// ---- checkpoints ---------------------------------------------------------

namespace {

json model_config_json(const ModelConfig& c) {
  return json{{"enc_depth", c.enc_depth},     {"enc_base", c.enc_base},
              {"dec_depth", c.dec_depth},     {"dec_base", c.dec_base},
              {"feature_channels", c.feature_channels},
              {"mask_embed", c.mask_embed},   {"season_hidden", c.season_hidden}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.enc_depth = j.at("enc_depth").get<int>();
  c.enc_base = j.at("enc_base").get<int>();
  c.dec_depth = j.at("dec_depth").get<int>();
  c.dec_base = j.at("dec_base").get<int>();
  c.feature_channels = j.at("feature_channels").get<int>();
  c.mask_embed = j.at("mask_embed").get<int>();
  c.season_hidden = j.at("season_hidden").get<int>();
  return c;
}

constexpr int kCheckpointVersion = 1;

json load_ckpt_manifest(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw PackError("cannot open checkpoint manifest in " + dir.string());
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw PackError("checkpoint manifest parse error: " + std::string(e.what()));
  }
  const int version = manifest.value("format_version", -1);
  if (version != kCheckpointVersion)
    throw PackVersionError("checkpoint format version " +
                           std::to_string(version) + ", expected " +
                           std::to_string(kCheckpointVersion));
  return manifest;
}

}  // namespace

void save_checkpoint(const fs::path& dir, const CheckpointMeta& meta,
                     const NamedParams& params) {
  fs::create_directories(dir);
  json manifest;
  manifest["format_version"] = kCheckpointVersion;
  manifest["dtype"] = "f32le";
  manifest["model_kind"] = meta.model_kind;
  manifest["model_config"] = model_config_json(meta.cfg);
  manifest["norm_stats"] = {{"s1_mean", meta.stats.s1_mean},
                            {"s1_std", meta.stats.s1_std},
                            {"lai_mean", meta.stats.lai_mean},
                            {"lai_std", meta.stats.lai_std}};
  json plist = json::array();
  std::size_t total = 0;
  for (const auto& [name, t] : params) {
    plist.push_back({{"name", name}, {"shape", t.shape()}});
    total += t.numel();
  }
  manifest["params"] = plist;
  {
    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    if (!out) throw PackError("cannot write checkpoint manifest");
    out << manifest.dump(2) << "\n";
  }
  std::vector<float> blob;
  blob.reserve(total);
  for (const auto& [name, t] : params)
    blob.insert(blob.end(), t.data().begin(), t.data().end());
  std::ofstream out(dir / "params.bin", std::ios::binary | std::ios::trunc);
  if (!out) throw PackError("cannot write params.bin");
  out.write(reinterpret_cast<const char*>(blob.data()),
            static_cast<std::streamsize>(blob.size() * sizeof(float)));
  if (!out) throw PackError("write failed for params.bin");
}

CheckpointMeta read_checkpoint_meta(const fs::path& dir) {
  const json manifest = load_ckpt_manifest(dir);
  CheckpointMeta meta;
  meta.model_kind = manifest.value("model_kind", "");
  meta.cfg = model_config_from_json(manifest.at("model_config"));
  const auto& st = manifest.at("norm_stats");
  meta.stats.s1_mean = st.at("s1_mean").get<double>();
  meta.stats.s1_std = st.at("s1_std").get<double>();
  meta.stats.lai_mean = st.at("lai_mean").get<double>();
  meta.stats.lai_std = st.at("lai_std").get<double>();
  return meta;
}

void load_checkpoint_params(const fs::path& dir, NamedParams target,
                            bool allow_partial) {
  const json manifest = load_ckpt_manifest(dir);

  struct Entry {
    Shape shape;
    std::size_t offset = 0;
  };
  std::map<std::string, Entry> stored;
  std::size_t total = 0;
  for (const auto& p : manifest.at("params")) {
    Entry e;
    e.shape = p.at("shape").get<Shape>();
    e.offset = total;
    total += shape_numel(e.shape);
    stored.emplace(p.at("name").get<std::string>(), std::move(e));
  }

  std::ifstream in(dir / "params.bin", std::ios::binary);
  if (!in) throw PackError("cannot open params.bin in " + dir.string());
  in.seekg(0, std::ios::end);
  const std::size_t actual = static_cast<std::size_t>(in.tellg());
  const std::size_t expected = total * sizeof(float);
  if (actual < expected) throw PackTruncatedError("params.bin", expected, actual);
  if (actual > expected)
    throw PackSizeError("params.bin holds " + std::to_string(actual) +
                        " bytes but the manifest implies " +
                        std::to_string(expected));
  in.seekg(0);
  std::vector<float> blob(total);
  in.read(reinterpret_cast<char*>(blob.data()),
          static_cast<std::streamsize>(expected));
  if (!in) throw PackError("read failed for params.bin");

  std::set<std::string> target_names;
  for (const auto& [name, t] : target) target_names.insert(name);
  std::string missing, extra;
  for (const auto& [name, e] : stored)
    if (!target_names.count(name)) extra += " " + name;
  if (!allow_partial) {
    for (const auto& name : target_names)
      if (!stored.count(name)) missing += " " + name;
  }
  if (!missing.empty() || !extra.empty())
    throw CheckpointMismatchError(
        "checkpoint/model parameter names disagree:" +
        (missing.empty() ? "" : " missing from checkpoint:" + missing) +
        (extra.empty() ? "" : " unmatched in model:" + extra));

  for (auto& [name, t] : target) {
    auto it = stored.find(name);
    if (it == stored.end()) continue;  // partial load
    if (it->second.shape != t.shape())
      throw CheckpointMismatchError("parameter '" + name + "' has shape " +
                                    shape_str(it->second.shape) +
                                    " in checkpoint, model expects " +
                                    shape_str(t.shape()));
    std::copy(blob.begin() + static_cast<std::ptrdiff_t>(it->second.offset),
              blob.begin() + static_cast<std::ptrdiff_t>(it->second.offset +
                                                         t.numel()),
              t.data().begin());
  }
}

// ---- explicit instantiations ----------------------------------------------

template UNetParams<float> make_unet(const UNetConfig&, Rng&);
template UNetParams<double> make_unet(const UNetConfig&, Rng&);
template EncoderParams<float> make_encoder(const ModelConfig&, EncoderId, Rng&);
template EncoderParams<double> make_encoder(const ModelConfig&, EncoderId, Rng&);
template ModelParams<float> make_model(const ModelConfig&, std::uint64_t);
template ModelParams<double> make_model(const ModelConfig&, std::uint64_t);
template NamedParamsT<float> named_params(UNetParams<float>&, const std::string&);
template NamedParamsT<double> named_params(UNetParams<double>&, const std::string&);
template NamedParamsT<float> named_params(EncoderParams<float>&, const std::string&);
template NamedParamsT<double> named_params(EncoderParams<double>&, const std::string&);
template NamedParamsT<float> named_params(ModelParams<float>&);
template NamedParamsT<double> named_params(ModelParams<double>&);
template Batch<float> assemble_batch(std::span<const SceneSample>,
                                     std::span<const int>, const BatchOptions&);
template Batch<double> assemble_batch(std::span<const SceneSample>,
                                      std::span<const int>, const BatchOptions&);
template Tensor<float> unet_forward(const UNetParams<float>&, const Tensor<float>&);
template Tensor<double> unet_forward(const UNetParams<double>&, const Tensor<double>&);
template EncoderOut<float> encoder_forward(const EncoderParams<float>&,
                                           const Tensor<float>&,
                                           const Tensor<float>&,
                                           const Tensor<float>&);
template EncoderOut<double> encoder_forward(const EncoderParams<double>&,
                                            const Tensor<double>&,
                                            const Tensor<double>&,
                                            const Tensor<double>&);
template Tensor<float> decoder_forward(const UNetParams<float>&,
                                       const Tensor<float>&, const Tensor<float>&);
template Tensor<double> decoder_forward(const UNetParams<double>&,
                                        const Tensor<double>&,
                                        const Tensor<double>&);
template ModelOut<float> full_forward(const ModelParams<float>&, const Batch<float>&);
template ModelOut<double> full_forward(const ModelParams<double>&, const Batch<double>&);

}  // namespace lai
