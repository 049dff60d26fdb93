#include "lai/lossmetrics.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "lai/ops.hpp"

namespace lai {

void LossWeights::validate() const {
  if (!std::isfinite(alpha) || !std::isfinite(beta) || alpha < 0.0 || beta < 0.0)
    throw ContractError("loss weights must be finite and non-negative");
}

template <typename T>
Tensor<T> masked_mse(const Tensor<T>& pred, const Tensor<T>& gt,
                     const Tensor<T>& valid) {
  if (pred.shape() != gt.shape() || pred.shape() != valid.shape())
    throw ContractError("masked_mse: shape mismatch " +
                        shape_str(pred.shape()) + " / " +
                        shape_str(gt.shape()) + " / " +
                        shape_str(valid.shape()));
  const T* pd = pred.data().data();
  const T* gd = gt.data().data();
  const T* vd = valid.data().data();
  const std::size_t n = pred.numel();
  T sum_sq = T(0);
  T sum_valid = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    if (vd[i] == T(0)) continue;  // masked pixels never touch the sum
    const T d = pd[i] - gd[i];
    sum_sq += d * d;
    sum_valid += vd[i];
  }
  if (sum_valid == T(0))
    throw AllMaskedBatchError("masked_mse: every pixel in the batch is masked");
  Tensor<T> y = Tensor<T>::scalar(sum_sq / sum_valid);

  if (Tape<T>::current().recording() &&
      (pred.requires_grad() || gt.requires_grad())) {
    y.set_requires_grad(true);
    auto pn = pred.node(), gn = gt.node(), vn = valid.node(), yn = y.node();
    Tape<T>::current().record(
        {yn,
         {pn, gn, vn},
         [pn, gn, vn, sum_valid](const std::vector<T>& dy, Adjoints<T>& adj) {
           const T* pd = pn->value.data();
           const T* gd = gn->value.data();
           const T* vd = vn->value.data();
           const T coeff = T(2) * dy[0] / sum_valid;
           if (pn->requires_grad) {
             T* dp = adj.at(pn).data();
             for (std::size_t i = 0; i < pn->value.size(); ++i)
               if (vd[i] != T(0)) dp[i] += coeff * (pd[i] - gd[i]);
           }
           if (gn->requires_grad) {
             T* dg = adj.at(gn).data();
             for (std::size_t i = 0; i < gn->value.size(); ++i)
               if (vd[i] != T(0)) dg[i] -= coeff * (pd[i] - gd[i]);
           }
         }});
  }
  return y;
}

template <typename T>
Tensor<T> combined_loss(const Tensor<T>& gt, const Tensor<T>& lai_dec,
                        const Tensor<T>& lai_enc1, const Tensor<T>& lai_enc2,
                        const Tensor<T>& valid, const LossWeights& w) {
  w.validate();
  Tensor<T> dec_term = masked_mse(lai_dec, gt, valid);
  Tensor<T> enc1_term = masked_mse(lai_enc1, gt, valid);
  Tensor<T> enc2_term = masked_mse(lai_enc2, gt, valid);
  return add(add(dec_term, scale(enc1_term, static_cast<T>(w.alpha))),
             scale(enc2_term, static_cast<T>(w.beta)));
}

namespace {

struct PooledStats {
  double ss_res = 0.0;
  double gt_sum = 0.0;
  std::size_t n = 0;
};

PooledStats pool(std::span<const float> pred, std::span<const float> gt,
                 std::span<const float> valid) {
  if (pred.size() != gt.size() || pred.size() != valid.size())
    throw ContractError("metrics: input spans differ in length");
  PooledStats st;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (valid[i] == 0.0f) continue;
    const double d = static_cast<double>(pred[i]) - gt[i];
    st.ss_res += d * d;
    st.gt_sum += gt[i];
    ++st.n;
  }
  return st;
}

}  // namespace

double rmse(std::span<const float> pred, std::span<const float> gt,
            std::span<const float> valid) {
  const PooledStats st = pool(pred, gt, valid);
  if (st.n == 0)
    throw AllMaskedBatchError("rmse: no valid pixels");
  return std::sqrt(st.ss_res / static_cast<double>(st.n));
}

double r2(std::span<const float> pred, std::span<const float> gt,
          std::span<const float> valid) {
  const PooledStats st = pool(pred, gt, valid);
  if (st.n < 2)
    throw UndefinedVarianceError("r2: needs at least two valid pixels");
  const double mean = st.gt_sum / static_cast<double>(st.n);
  double ss_tot = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (valid[i] == 0.0f) continue;
    const double d = static_cast<double>(gt[i]) - mean;
    ss_tot += d * d;
  }
  if (ss_tot == 0.0)
    throw UndefinedVarianceError("r2: ground truth is constant over valid pixels");
  return 1.0 - st.ss_res / ss_tot;
}

std::string metrics_csv(const MetricsReport& report) {
  std::ostringstream out;
  out << "variant,split,rmse,r2,n_valid_pixels\n";
  out.precision(10);
  for (const auto& row : report)
    out << row.variant << ',' << row.split << ',' << row.rmse << ',' << row.r2
        << ',' << row.n_valid_pixels << '\n';
  return out.str();
}

void write_metrics_csv(const MetricsReport& report,
                       const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write metrics report to " + path.string());
  out << metrics_csv(report);
}

MetricsRow evaluate_split(const PixelPredictor& predict,
                          const std::vector<SceneSample>& samples,
                          const std::string& variant,
                          const std::string& split_label) {
  if (samples.empty())
    throw DegenerateDatasetError("evaluate_split: split '" + split_label +
                                 "' is empty");
  std::vector<float> preds, gts, valids;
  const std::size_t plane = samples.front().plane();
  preds.reserve(samples.size() * plane);
  gts.reserve(samples.size() * plane);
  valids.reserve(samples.size() * plane);
  for (const auto& s : samples) {
    std::vector<float> p = predict(s);
    if (p.size() != s.plane())
      throw ContractError("evaluate_split: predictor returned " +
                          std::to_string(p.size()) + " pixels for a " +
                          std::to_string(s.tile) + "^2 tile");
    Tensor<float> vm = valid_pixel_mask<float>(
        s.masks.data() + std::size_t(kTimestamps - 1) * s.plane(), s.tile,
        s.tile);
    preds.insert(preds.end(), p.begin(), p.end());
    gts.insert(gts.end(), s.lai_target.begin(), s.lai_target.end());
    valids.insert(valids.end(), vm.data().begin(), vm.data().end());
  }
  MetricsRow row;
  row.variant = variant;
  row.split = split_label;
  row.rmse = rmse(preds, gts, valids);
  row.r2 = r2(preds, gts, valids);
  for (float v : valids)
    if (v != 0.0f) ++row.n_valid_pixels;
  return row;
}

template Tensor<float> masked_mse(const Tensor<float>&, const Tensor<float>&,
                                  const Tensor<float>&);
template Tensor<double> masked_mse(const Tensor<double>&, const Tensor<double>&,
                                   const Tensor<double>&);
template Tensor<float> combined_loss(const Tensor<float>&, const Tensor<float>&,
                                     const Tensor<float>&, const Tensor<float>&,
                                     const Tensor<float>&, const LossWeights&);
template Tensor<double> combined_loss(const Tensor<double>&,
                                      const Tensor<double>&,
                                      const Tensor<double>&,
                                      const Tensor<double>&,
                                      const Tensor<double>&,
                                      const LossWeights&);

}  // namespace lai
