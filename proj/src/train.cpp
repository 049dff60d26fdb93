#include "lai/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace lai {

void TrainConfig::validate() const {
  if (epochs < 1) throw ContractError("epochs must be >= 1");
  if (!(lr0 > 0.0)) throw ContractError("lr0 must be positive");
  if (!(decay_factor > 0.0) || decay_factor > 1.0)
    throw ContractError("decay_factor must lie in (0,1]");
  if (n_decays < 0) throw ContractError("n_decays must be >= 0");
  if (batch_size < 1) throw ContractError("batch_size must be >= 1");
  weights.validate();
}

double lr_schedule(const TrainConfig& cfg, int epoch) {
  if (epoch < 0 || epoch >= cfg.epochs)
    throw ContractError("lr_schedule: epoch out of range");
  int passed = 0;
  for (int k = 1; k <= cfg.n_decays; ++k) {
    const int boundary = static_cast<int>(
        (static_cast<long>(k) * cfg.epochs) / (cfg.n_decays + 1));
    if (boundary <= epoch) ++passed;
  }
  double lr = cfg.lr0;
  for (int i = 0; i < passed; ++i) lr *= cfg.decay_factor;
  return lr;
}

Adam::Adam(double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(NamedParams& params, double lr) {
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(params[i].second.numel(), 0.0f);
      v_[i].assign(params[i].second.numel(), 0.0f);
    }
  }
  if (m_.size() != params.size())
    throw ContractError("adam: parameter list changed between steps");
  ++t_;
  const double bias1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bias2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<float>& p = params[i].second;
    if (!p.has_grad()) continue;  // no gradient reached this tensor: no-op
    auto g = p.grad();
    auto w = p.data();
    float* m = m_[i].data();
    float* v = v_[i].data();
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (std::isnan(g[j]))
        throw TrainingDivergenceError(
            "NaN gradient in parameter '" + params[i].first + "'", t_);
      m[j] = static_cast<float>(beta1_ * m[j] + (1.0 - beta1_) * g[j]);
      v[j] = static_cast<float>(beta2_ * v[j] +
                                (1.0 - beta2_) * static_cast<double>(g[j]) * g[j]);
      const double m_hat = m[j] / bias1;
      const double v_hat = v[j] / bias2;
      w[j] -= static_cast<float>(lr * m_hat / (std::sqrt(v_hat) + eps_));
    }
  }
}

std::string format_step(const StepRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "step=%ld epoch=%d lr=%.10g loss=%.10g loss_dec=%.10g "
                "loss_enc1=%.10g loss_enc2=%.10g",
                r.step, r.epoch, r.lr, r.loss, r.loss_dec, r.loss_enc1,
                r.loss_enc2);
  return buf;
}

namespace {

bool batch_has_valid_pixel(const Batch<float>& b) {
  for (float v : b.valid.data())
    if (v != 0.0f) return true;
  return false;
}

std::vector<std::vector<float>> snapshot_values(NamedParams& params) {
  std::vector<std::vector<float>> snap;
  snap.reserve(params.size());
  for (auto& [name, t] : params)
    snap.emplace_back(t.data().begin(), t.data().end());
  return snap;
}

void restore_values(NamedParams& params,
                    const std::vector<std::vector<float>>& snap) {
  for (std::size_t i = 0; i < params.size(); ++i)
    std::copy(snap[i].begin(), snap[i].end(), params[i].second.data().begin());
}

void zero_all_grads(NamedParams& params) {
  for (auto& [name, t] : params) t.zero_grad();
}

double eval_rmse(const PixelPredictor& predict,
                 const std::vector<SceneSample>& samples) {
  return evaluate_split(predict, samples, "val", "val").rmse;
}

constexpr std::uint64_t kShuffleSalt = 0x75aff1e5a17u;

// deterministic epoch ordering shared by both training stages
std::vector<int> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<int> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
  Rng rng(derive_stream(seed, kShuffleSalt, static_cast<std::uint64_t>(epoch)));
  rng.shuffle(order);
  return order;
}

}  // namespace

PixelPredictor encoder_predictor(const EncoderParams<float>& enc,
                                 EncoderId which, const BatchOptions& opt) {
  return [&enc, which, opt](const SceneSample& s) {
    NoGradGuard ng;
    const int idx[1] = {0};
    Batch<float> b = assemble_batch<float>(std::span(&s, 1), idx, opt);
    EncoderOut<float> out =
        encoder_forward(enc, encoder_input(b, which), b.masks, b.season);
    return std::vector<float>(out.head.data().begin(), out.head.data().end());
  };
}

PixelPredictor model_predictor(const ModelParams<float>& model,
                               const BatchOptions& opt) {
  return [&model, opt](const SceneSample& s) {
    NoGradGuard ng;
    const int idx[1] = {0};
    Batch<float> b = assemble_batch<float>(std::span(&s, 1), idx, opt);
    ModelOut<float> out = full_forward(model, b);
    return std::vector<float>(out.dec.data().begin(), out.dec.data().end());
  };
}

EncoderTrainResult pretrain_encoder(EncoderId which, const ModelConfig& mcfg,
                                    const std::vector<SceneSample>& train,
                                    const TrainConfig& cfg,
                                    const BatchOptions& opt,
                                    const std::vector<SceneSample>* val,
                                    const StepCallback& on_step) {
  cfg.validate();
  if (train.empty())
    throw DegenerateDatasetError("pretrain: empty training set");

  EncoderTrainResult res;
  {
    Rng rng(derive_stream(cfg.seed, static_cast<std::uint64_t>(which), 0));
    res.encoder = make_encoder<float>(mcfg, which, rng);
  }
  NamedParams params = named_params(res.encoder, encoder_prefix(which));
  Adam adam(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  auto& tape = Tape<float>::current();

  long step = 0;
  std::optional<std::vector<std::vector<float>>> best_snapshot;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_schedule(cfg, epoch);
    const std::vector<int> order = epoch_order(train.size(), cfg.seed, epoch);
    double epoch_sum = 0.0;
    int used = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::span<const int> idx(order.data() + start, end - start);
      Batch<float> batch = assemble_batch<float>(train, idx, opt);
      if (!batch_has_valid_pixel(batch)) continue;

      tape.clear();
      zero_all_grads(params);
      EncoderOut<float> out = encoder_forward(
          res.encoder, encoder_input(batch, which), batch.masks, batch.season);
      Tensor<float> loss = masked_mse(out.head, batch.target, batch.valid);
      backward(loss);
      adam.step(params, lr);
      tape.clear();

      const double lv = loss.item();
      epoch_sum += lv;
      ++used;
      ++step;
      res.final_loss = lv;
      if (on_step) on_step({step, epoch, lr, lv, lv, 0.0, 0.0});
    }
    if (used == 0)
      throw DegenerateDatasetError(
          "pretrain: every batch of epoch " + std::to_string(epoch) +
          " was fully masked");
    res.epoch_loss.push_back(epoch_sum / used);

    if (val && !val->empty()) {
      const double vr =
          eval_rmse(encoder_predictor(res.encoder, which, opt), *val);
      if (!res.best_val_rmse || vr < *res.best_val_rmse) {
        res.best_val_rmse = vr;
        best_snapshot = snapshot_values(params);
      }
    }
  }
  if (best_snapshot) restore_values(params, *best_snapshot);
  return res;
}

ModelParams<float> init_full_model(const EncoderParams<float>& enc1,
                                   const EncoderParams<float>& enc2,
                                   const ModelConfig& mcfg,
                                   std::uint64_t seed) {
  ModelParams<float> model = make_model<float>(mcfg, seed);
  // adopt the pretrained encoder weights; shapes must line up
  auto copy_encoder = [](EncoderParams<float>& dst,
                         const EncoderParams<float>& src, const char* prefix) {
    NamedParams d = named_params(dst, prefix);
    NamedParams s = named_params(const_cast<EncoderParams<float>&>(src), prefix);
    if (d.size() != s.size())
      throw CheckpointMismatchError("pretrained encoder structure mismatch");
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (d[i].first != s[i].first || d[i].second.shape() != s[i].second.shape())
        throw CheckpointMismatchError("pretrained parameter '" + s[i].first +
                                      "' does not fit the full model");
      std::copy(s[i].second.data().begin(), s[i].second.data().end(),
                d[i].second.data().begin());
    }
  };
  copy_encoder(model.enc1, enc1, "enc1");
  copy_encoder(model.enc2, enc2, "enc2");
  return model;
}

ModelTrainResult finetune_full(const EncoderParams<float>& enc1,
                               const EncoderParams<float>& enc2,
                               const ModelConfig& mcfg,
                               const std::vector<SceneSample>& train,
                               const TrainConfig& cfg, const BatchOptions& opt,
                               const std::vector<SceneSample>* val,
                               const StepCallback& on_step) {
  cfg.validate();
  if (train.empty())
    throw DegenerateDatasetError("finetune: empty training set");

  ModelTrainResult res;
  res.model = init_full_model(enc1, enc2, mcfg, cfg.seed);

  NamedParams params = named_params(res.model);
  Adam adam(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  auto& tape = Tape<float>::current();

  long step = 0;
  std::optional<std::vector<std::vector<float>>> best_snapshot;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_schedule(cfg, epoch);
    const std::vector<int> order =
        epoch_order(train.size(), cfg.seed ^ 0xf1e7u, epoch);
    double epoch_sum = 0.0;
    int used = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::span<const int> idx(order.data() + start, end - start);
      Batch<float> batch = assemble_batch<float>(train, idx, opt);
      if (!batch_has_valid_pixel(batch)) continue;

      tape.clear();
      zero_all_grads(params);
      ModelOut<float> out = full_forward(res.model, batch);
      Tensor<float> dec_term = masked_mse(out.dec, batch.target, batch.valid);
      Tensor<float> enc1_term =
          masked_mse(out.enc1_head, batch.target, batch.valid);
      Tensor<float> enc2_term =
          masked_mse(out.enc2_head, batch.target, batch.valid);
      Tensor<float> loss =
          add(add(dec_term, scale(enc1_term, static_cast<float>(cfg.weights.alpha))),
              scale(enc2_term, static_cast<float>(cfg.weights.beta)));
      backward(loss);
      adam.step(params, lr);
      tape.clear();

      const double lv = loss.item();
      epoch_sum += lv;
      ++used;
      ++step;
      res.final_loss = lv;
      if (on_step)
        on_step({step, epoch, lr, lv, dec_term.item(), enc1_term.item(),
                 enc2_term.item()});
    }
    if (used == 0)
      throw DegenerateDatasetError(
          "finetune: every batch of epoch " + std::to_string(epoch) +
          " was fully masked");
    res.epoch_loss.push_back(epoch_sum / used);

    if (val && !val->empty()) {
      const double vr = eval_rmse(model_predictor(res.model, opt), *val);
      if (!res.best_val_rmse || vr < *res.best_val_rmse) {
        res.best_val_rmse = vr;
        best_snapshot = snapshot_values(params);
      }
    }
  }
  if (best_snapshot) restore_values(params, *best_snapshot);
  return res;
}

MetricsReport run_ablations(const AblationData& data, const ModelConfig& mcfg,
                            const TrainConfig& cfg, const StepCallback& on_step) {
  const NormStats stats = compute_norm_stats(data.train);
  const std::vector<SceneSample> train = normalize(data.train, stats);
  const std::vector<SceneSample> non_cloudy = normalize(data.non_cloudy, stats);
  const std::vector<SceneSample> cloudy = normalize(data.cloudy, stats);
  const std::vector<SceneSample> unique_areas =
      normalize(data.unique_areas, stats);

  struct EncVariant {
    const char* label;
    EncoderId which;
    BatchOptions opt;
  };
  const EncVariant enc_variants[] = {
      {"s1", EncoderId::kEnc1, {false, false}},
      {"s1+masks", EncoderId::kEnc1, {true, false}},
      {"s1+masks+seas", EncoderId::kEnc1, {true, true}},
      {"s2+masks", EncoderId::kEnc2, {true, false}},
      {"s2+masks+seas", EncoderId::kEnc2, {true, true}},
  };

  MetricsReport report;
  auto eval_variant = [&](const std::string& label, const PixelPredictor& p) {
    report.push_back(evaluate_split(p, non_cloudy, label, "non_cloudy"));
    report.push_back(evaluate_split(p, cloudy, label, "cloudy"));
    report.push_back(evaluate_split(p, unique_areas, label, "unique_areas"));
  };

  std::optional<EncoderParams<float>> enc1_full, enc2_full;
  for (std::size_t v = 0; v < std::size(enc_variants); ++v) {
    const EncVariant& spec = enc_variants[v];
    TrainConfig vcfg = cfg;
    vcfg.seed = derive_stream(cfg.seed, 0xab1a7e, v);
    EncoderTrainResult r = pretrain_encoder(spec.which, mcfg, train, vcfg,
                                            spec.opt, &non_cloudy, on_step);
    eval_variant(spec.label, encoder_predictor(r.encoder, spec.which, spec.opt));
    if (std::string(spec.label) == "s1+masks+seas") enc1_full = r.encoder;
    if (std::string(spec.label) == "s2+masks+seas") enc2_full = r.encoder;
  }

  TrainConfig fcfg = cfg;
  fcfg.seed = derive_stream(cfg.seed, 0xab1a7e, 5);
  ModelTrainResult full = finetune_full(*enc1_full, *enc2_full, mcfg, train,
                                        fcfg, {true, true}, &non_cloudy,
                                        on_step);
  eval_variant("full", model_predictor(full.model));
  return report;
}

// ---- MLR baseline ----------------------------------------------------------

namespace {

// feature vector for one pixel, in fixed order
void pixel_features(const SceneSample& s, std::size_t i, double* f) {
  const std::size_t plane = s.plane();
  int k = 0;
  for (int c = 0; c < kTimestamps * kPolarizations; ++c)
    f[k++] = s.s1[static_cast<std::size_t>(c) * plane + i];
  for (int c = 0; c < kPastFrames; ++c)
    f[k++] = s.s2_lai_past[static_cast<std::size_t>(c) * plane + i];
  for (int t = 0; t < kTimestamps; ++t) {
    const std::uint8_t cls = s.masks[static_cast<std::size_t>(t) * plane + i];
    for (int c = 0; c < kMaskClassCount; ++c) f[k++] = cls == c ? 1.0 : 0.0;
  }
  const Seasonality se = seasonality_features(s.day_of_year);
  f[k++] = se.sin_component;
  f[k++] = se.cos_component;
  f[k++] = 1.0;  // bias
}

// Gaussian elimination with partial pivoting on the (jittered) normal matrix
std::vector<double> solve_normal(std::vector<double> a, std::vector<double> b,
                                 int d) {
  for (int col = 0; col < d; ++col) {
    int pivot = col;
    for (int r = col + 1; r < d; ++r)
      if (std::abs(a[static_cast<std::size_t>(r) * d + col]) >
          std::abs(a[static_cast<std::size_t>(pivot) * d + col]))
        pivot = r;
    if (std::abs(a[static_cast<std::size_t>(pivot) * d + col]) < 1e-14)
      throw DegenerateFeaturesError(
          "mlr: normal equations singular beyond ridge jitter");
    if (pivot != col) {
      for (int c = 0; c < d; ++c)
        std::swap(a[static_cast<std::size_t>(col) * d + c],
                  a[static_cast<std::size_t>(pivot) * d + c]);
      std::swap(b[col], b[pivot]);
    }
    const double diag = a[static_cast<std::size_t>(col) * d + col];
    for (int r = col + 1; r < d; ++r) {
      const double factor = a[static_cast<std::size_t>(r) * d + col] / diag;
      if (factor == 0.0) continue;
      for (int c = col; c < d; ++c)
        a[static_cast<std::size_t>(r) * d + c] -=
            factor * a[static_cast<std::size_t>(col) * d + c];
      b[r] -= factor * b[col];
    }
  }
  std::vector<double> x(static_cast<std::size_t>(d));
  for (int r = d - 1; r >= 0; --r) {
    double acc = b[r];
    for (int c = r + 1; c < d; ++c)
      acc -= a[static_cast<std::size_t>(r) * d + c] * x[c];
    x[r] = acc / a[static_cast<std::size_t>(r) * d + r];
  }
  return x;
}

}  // namespace

MlrModel fit_mlr(const std::vector<SceneSample>& train) {
  if (train.empty()) throw DegenerateDatasetError("mlr: empty training set");
  const int d = kMlrFeatures;
  std::vector<double> xtx(static_cast<std::size_t>(d) * d, 0.0);
  std::vector<double> xty(static_cast<std::size_t>(d), 0.0);
  double f[kMlrFeatures];
  std::size_t n = 0;
  for (const auto& s : train) {
    const std::size_t plane = s.plane();
    const std::uint8_t* target_mask =
        s.masks.data() + std::size_t(kTimestamps - 1) * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      if (!mask_class_valid(target_mask[i])) continue;
      pixel_features(s, i, f);
      const double y = s.lai_target[i];
      for (int r = 0; r < d; ++r) {
        for (int c = r; c < d; ++c)
          xtx[static_cast<std::size_t>(r) * d + c] += f[r] * f[c];
        xty[static_cast<std::size_t>(r)] += f[r] * y;
      }
      ++n;
    }
  }
  if (n == 0) throw DegenerateDatasetError("mlr: no valid training pixels");
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < r; ++c)
      xtx[static_cast<std::size_t>(r) * d + c] =
          xtx[static_cast<std::size_t>(c) * d + r];
  // mean-normalize, then ridge jitter
  const double inv_n = 1.0 / static_cast<double>(n);
  for (auto& v : xtx) v *= inv_n;
  for (auto& v : xty) v *= inv_n;
  for (int r = 0; r < d; ++r) xtx[static_cast<std::size_t>(r) * d + r] += 1e-8;

  MlrModel m;
  m.coef = solve_normal(std::move(xtx), std::move(xty), d);
  return m;
}

std::vector<float> mlr_predict(const MlrModel& m, const SceneSample& sample) {
  const std::size_t plane = sample.plane();
  std::vector<float> out(plane);
  double f[kMlrFeatures];
  for (std::size_t i = 0; i < plane; ++i) {
    pixel_features(sample, i, f);
    double acc = 0.0;
    for (int k = 0; k < kMlrFeatures; ++k) acc += m.coef[static_cast<std::size_t>(k)] * f[k];
    out[i] = static_cast<float>(acc);
  }
  return out;
}

MetricsReport mlr_baseline(const AblationData& data) {
  const NormStats stats = compute_norm_stats(data.train);
  const MlrModel m = fit_mlr(normalize(data.train, stats));
  MetricsReport report;
  auto predict = [&m](const SceneSample& s) { return mlr_predict(m, s); };
  report.push_back(evaluate_split(predict, normalize(data.non_cloudy, stats),
                                  "mlr", "non_cloudy"));
  report.push_back(
      evaluate_split(predict, normalize(data.cloudy, stats), "mlr", "cloudy"));
  report.push_back(evaluate_split(predict, normalize(data.unique_areas, stats),
                                  "mlr", "unique_areas"));
  return report;
}

}  // namespace lai
