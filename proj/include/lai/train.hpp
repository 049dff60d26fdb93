#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lai/lossmetrics.hpp"
#include "lai/model.hpp"

namespace lai {

struct TrainConfig {
  int epochs = 100;
  double lr0 = 0.001;
  double decay_factor = 0.2;
  int n_decays = 2;
  int batch_size = 32;       // paper scale; desk runs use 8
  LossWeights weights{0.1, 0.15};
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
};

// Step decay with n_decays boundaries at floor(k*epochs/(n_decays+1));
// lr = lr0 * decay_factor^(boundaries passed). Non-increasing, takes exactly
// n_decays+1 distinct values over a full run.
double lr_schedule(const TrainConfig& cfg, int epoch);

// Bias-corrected Adam over a named parameter list. Moments are laid out in
// parameter order, so a fixed seed gives bit-identical trajectories.
class Adam {
 public:
  Adam(double beta1, double beta2, double eps);

  // Reads each tensor's gradient (missing buffer = zero), updates values in
  // place. NaN gradients raise TrainingDivergenceError with the step index.
  void step(NamedParams& params, double lr);

  long steps() const { return t_; }

 private:
  double beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<std::vector<float>> m_, v_;
};

struct StepRecord {
  long step = 0;
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double loss_dec = 0.0;
  double loss_enc1 = 0.0;
  double loss_enc2 = 0.0;
};
using StepCallback = std::function<void(const StepRecord&)>;

// formats one training-log line: step=.. epoch=.. lr=.. loss=.. loss_dec=..
std::string format_step(const StepRecord& r);

struct EncoderTrainResult {
  EncoderParams<float> encoder;
  std::vector<double> epoch_loss;       // mean train loss per epoch
  double final_loss = 0.0;              // last training batch loss
  std::optional<double> best_val_rmse;  // present when a val set was given
};

// Stage one of the two-step protocol: trains one encoder alone against the
// masked MSE of its pixel-wise head. All-masked batches are skipped; an
// epoch with no usable batch raises DegenerateDatasetError. When `val` is
// given, the returned encoder is the epoch snapshot with the lowest
// validation RMSE, otherwise the final state.
EncoderTrainResult pretrain_encoder(EncoderId which, const ModelConfig& mcfg,
                                    const std::vector<SceneSample>& train,
                                    const TrainConfig& cfg,
                                    const BatchOptions& opt = {},
                                    const std::vector<SceneSample>* val = nullptr,
                                    const StepCallback& on_step = nullptr);

struct ModelTrainResult {
  ModelParams<float> model;
  std::vector<double> epoch_loss;
  double final_loss = 0.0;
  std::optional<double> best_val_rmse;
};

// Fine-tune starting point: both encoders carry the pretrained values, the
// decoder is freshly initialized from the seed. The in-model encoder heads
// reproduce the standalone encoders exactly at this point.
ModelParams<float> init_full_model(const EncoderParams<float>& enc1,
                                   const EncoderParams<float>& enc2,
                                   const ModelConfig& mcfg, std::uint64_t seed);

// Stage two: seeds both encoders from pretrained parameters, initializes the
// decoder randomly, and optimizes the combined intermediate-supervision loss
// end to end (every parameter trainable).
ModelTrainResult finetune_full(const EncoderParams<float>& enc1,
                               const EncoderParams<float>& enc2,
                               const ModelConfig& mcfg,
                               const std::vector<SceneSample>& train,
                               const TrainConfig& cfg,
                               const BatchOptions& opt = {},
                               const std::vector<SceneSample>* val = nullptr,
                               const StepCallback& on_step = nullptr);

// predictors for evaluate_split
PixelPredictor encoder_predictor(const EncoderParams<float>& enc, EncoderId which,
                                 const BatchOptions& opt);
PixelPredictor model_predictor(const ModelParams<float>& model,
                               const BatchOptions& opt = {});

struct AblationData {
  std::vector<SceneSample> train;
  std::vector<SceneSample> non_cloudy;
  std::vector<SceneSample> cloudy;
  std::vector<SceneSample> unique_areas;
};

inline const std::vector<std::string> kAblationVariants = {
    "s1", "s1+masks", "s1+masks+seas", "s2+masks", "s2+masks+seas", "full"};

// Trains and evaluates the six ablation variants (single-encoder rows train
// the encoder alone and read its intermediate head; the full row reuses the
// two fully-equipped pretrained encoders) and reports RMSE / R^2 on the
// three eval splits. Input data is raw; normalization stats come from train.
MetricsReport run_ablations(const AblationData& data, const ModelConfig& mcfg,
                            const TrainConfig& cfg,
                            const StepCallback& on_step = nullptr);

// Per-pixel multi-linear-regression baseline: ordinary least squares via
// normal equations with ridge jitter, over the same per-pixel features the
// network sees (6 S1, 2 past LAI, 18 mask one-hots, sin, cos, bias).
struct MlrModel {
  std::vector<double> coef;  // kMlrFeatures
};
inline constexpr int kMlrFeatures = 6 + 2 + 18 + 2 + 1;

MlrModel fit_mlr(const std::vector<SceneSample>& train);
std::vector<float> mlr_predict(const MlrModel& m, const SceneSample& sample);
MetricsReport mlr_baseline(const AblationData& data);

}  // namespace lai
