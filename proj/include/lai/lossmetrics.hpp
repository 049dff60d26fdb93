#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lai/dataio.hpp"
#include "lai/tensor.hpp"

namespace lai {

struct LossWeights {
  double alpha = 0.1;
  double beta = 0.15;
  void validate() const;  // finite and non-negative
};

// Mean squared error over valid pixels only: sum(valid*(pred-gt)^2)/sum(valid).
// Differentiable w.r.t. pred (and gt); masked pixels contribute exactly zero
// to the value and the gradient. Throws AllMaskedBatchError when no pixel is
// valid.
template <typename T>
Tensor<T> masked_mse(const Tensor<T>& pred, const Tensor<T>& gt,
                     const Tensor<T>& valid);

// masked_mse(gt,dec) + alpha*masked_mse(gt,enc1) + beta*masked_mse(gt,enc2),
// all three terms gated by the same target-frame validity mask.
template <typename T>
Tensor<T> combined_loss(const Tensor<T>& gt, const Tensor<T>& lai_dec,
                        const Tensor<T>& lai_enc1, const Tensor<T>& lai_enc2,
                        const Tensor<T>& valid, const LossWeights& w);

// Pooled-pixel metrics in native LAI units. Pixels with valid == 0 are
// skipped entirely, so mutating them cannot change the result.
double rmse(std::span<const float> pred, std::span<const float> gt,
            std::span<const float> valid);
double r2(std::span<const float> pred, std::span<const float> gt,
          std::span<const float> valid);

struct MetricsRow {
  std::string variant;
  std::string split;
  double rmse = 0.0;
  double r2 = 0.0;
  std::size_t n_valid_pixels = 0;
};
using MetricsReport = std::vector<MetricsRow>;

std::string metrics_csv(const MetricsReport& report);
void write_metrics_csv(const MetricsReport& report,
                       const std::filesystem::path& path);

// Per-sample pixel predictor: returns a [tile*tile] LAI map.
using PixelPredictor =
    std::function<std::vector<float>(const SceneSample& sample)>;

// Pools valid pixels across every sample of the split and reports one
// RMSE / R^2 pair. Validity comes from the sample's target-frame mask.
MetricsRow evaluate_split(const PixelPredictor& predict,
                          const std::vector<SceneSample>& samples,
                          const std::string& variant,
                          const std::string& split_label);

}  // namespace lai
