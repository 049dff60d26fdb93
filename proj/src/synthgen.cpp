#include "lai/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "lai/rng.hpp"

namespace lai {
namespace {

constexpr std::uint64_t kSampleSalt = 0x5ce9e5aa11u;

// separable 3x3 box mean with clamped borders, applied in place
void box_smooth(std::vector<double>& f, int h, int w, int passes) {
  std::vector<double> tmp(f.size());
  for (int p = 0; p < passes; ++p) {
    // horizontal
    for (int y = 0; y < h; ++y) {
      const double* row = f.data() + static_cast<std::size_t>(y) * w;
      double* out = tmp.data() + static_cast<std::size_t>(y) * w;
      for (int x = 0; x < w; ++x) {
        const int x0 = std::max(0, x - 1), x1 = std::min(w - 1, x + 1);
        out[x] = (row[x0] + row[x] + row[x1]) / 3.0;
      }
    }
    // vertical
    for (int y = 0; y < h; ++y) {
      const int y0 = std::max(0, y - 1), y1 = std::min(h - 1, y + 1);
      for (int x = 0; x < w; ++x) {
        f[static_cast<std::size_t>(y) * w + x] =
            (tmp[static_cast<std::size_t>(y0) * w + x] +
             tmp[static_cast<std::size_t>(y) * w + x] +
             tmp[static_cast<std::size_t>(y1) * w + x]) /
            3.0;
      }
    }
  }
}

std::vector<double> smooth_noise(Rng& rng, int h, int w, int passes) {
  std::vector<double> f(static_cast<std::size_t>(h) * w);
  for (auto& v : f) v = rng.uniform();
  box_smooth(f, h, w, passes);
  return f;
}

// min-max rescale to [0,1]; flat fields collapse to 0.5
void rescale01(std::vector<double>& f) {
  auto [lo, hi] = std::minmax_element(f.begin(), f.end());
  const double range = *hi - *lo;
  if (range < 1e-12) {
    std::fill(f.begin(), f.end(), 0.5);
    return;
  }
  for (auto& v : f) v = (v - *lo) / range;
}

// zero-mean, unit-std standardization (flat fields become zero)
void standardize(std::vector<double>& f) {
  double sum = 0.0, sq = 0.0;
  for (double v : f) {
    sum += v;
    sq += v * v;
  }
  const double n = static_cast<double>(f.size());
  const double mean = sum / n;
  const double var = std::max(0.0, sq / n - mean * mean);
  const double std = std::sqrt(var);
  for (auto& v : f) v = std > 1e-12 ? (v - mean) / std : 0.0;
}

// marks the `fraction` largest values of a smooth field; exact by quantile
std::vector<bool> threshold_top_fraction(const std::vector<double>& field,
                                         double fraction) {
  const std::size_t n = field.size();
  std::vector<bool> out(n, false);
  if (fraction <= 0.0) return out;
  if (fraction >= 1.0) {
    out.assign(n, true);
    return out;
  }
  std::vector<double> sorted(field);
  const std::size_t idx = static_cast<std::size_t>(
      std::floor((1.0 - fraction) * static_cast<double>(n - 1)));
  std::nth_element(sorted.begin(), sorted.begin() + idx, sorted.end());
  const double tau = sorted[idx];
  for (std::size_t i = 0; i < n; ++i) out[i] = field[i] > tau;
  return out;
}

double vh_response(double lai) { return 0.7 * lai + 0.1 * lai * lai; }
double vv_response(double lai) { return 0.5 * lai + 0.2 * std::sqrt(lai); }

}  // namespace

void SceneConfig::validate() const {
  if (tile_size < 1) throw ContractError("tile_size must be >= 1");
  if (n_samples < 0) throw ContractError("n_samples must be >= 0");
  if (cloud_fraction < 0.0 || cloud_fraction > 1.0)
    throw ContractError("cloud_fraction must lie in [0,1]");
  if (s1_noise_std < 0.0) throw ContractError("s1_noise_std must be >= 0");
  if (temporal_drift < 0.0) throw ContractError("temporal_drift must be >= 0");
}

SceneSample generate_sample(const SceneConfig& cfg, std::uint64_t index) {
  cfg.validate();
  const int t = cfg.tile_size;
  const std::size_t plane = static_cast<std::size_t>(t) * t;
  Rng rng(derive_stream(cfg.seed, kSampleSalt, index));

  SceneSample s;
  s.tile = t;
  s.day_of_year = static_cast<float>(
      cfg.fixed_day ? *cfg.fixed_day : rng.uniform(0.0, 366.0));

  // base field: four value-noise octaves, coarse to fine
  std::vector<double> base(plane, 0.0);
  for (int k = 0; k < 4; ++k) {
    const int passes = 24 >> k;  // 24, 12, 6, 3
    const std::vector<double> octave = smooth_noise(rng, t, t, passes);
    const double weight = 1.0 / static_cast<double>(1 << k);
    for (std::size_t i = 0; i < plane; ++i) base[i] += weight * octave[i];
  }
  rescale01(base);

  // seasonal amplitude: LAI genuinely depends on day-of-year
  const double amp =
      0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * s.day_of_year / kYearDays);

  // LAI at t-2, t-1, t via cumulative smooth drift
  std::vector<std::vector<double>> lai(kTimestamps);
  lai[0].resize(plane);
  for (std::size_t i = 0; i < plane; ++i) lai[0][i] = amp * base[i];
  for (int f = 1; f < kTimestamps; ++f) {
    std::vector<double> drift = smooth_noise(rng, t, t, 12);
    standardize(drift);
    lai[f].resize(plane);
    for (std::size_t i = 0; i < plane; ++i)
      lai[f][i] = std::max(0.0, lai[f - 1][i] + cfg.temporal_drift * drift[i]);
  }

  // S1 backscatter: monotone responses to LAI plus iid noise; radar sees
  // through clouds, so no occlusion applies here
  s.s1.resize(std::size_t(kTimestamps * kPolarizations) * plane);
  for (int f = 0; f < kTimestamps; ++f) {
    float* vh = s.s1.data() + std::size_t(f * kPolarizations) * plane;
    float* vv = vh + plane;
    for (std::size_t i = 0; i < plane; ++i)
      vh[i] = static_cast<float>(vh_response(lai[f][i]) +
                                 rng.normal(0.0, cfg.s1_noise_std));
    for (std::size_t i = 0; i < plane; ++i)
      vv[i] = static_cast<float>(vv_response(lai[f][i]) +
                                 rng.normal(0.0, cfg.s1_noise_std));
  }

  // cloud regime: ~30% of samples fully clear, the rest uniform in coverage;
  // the mean over samples equals cfg.cloud_fraction
  double past_fraction = 0.0;
  if (cfg.cloud_fraction > 0.0) {
    const double regime = rng.uniform();
    if (regime >= 0.3)
      past_fraction = rng.uniform(0.0, std::min(1.0, cfg.cloud_fraction / 0.35));
  }

  // masks: land baseline, water at low base values, cloud blobs on top
  s.masks.assign(std::size_t(kTimestamps) * plane, 0);
  for (int f = 0; f < kTimestamps; ++f) {
    const double frac =
        f < kPastFrames ? past_fraction : cfg.cloud_fraction / 4.0;
    std::vector<double> cloud_field = smooth_noise(rng, t, t, 12);
    const std::vector<bool> clouded = threshold_top_fraction(cloud_field, frac);
    std::uint8_t* mp = s.masks.data() + static_cast<std::size_t>(f) * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      if (clouded[i])
        mp[i] = static_cast<std::uint8_t>(MaskClass::kCloud);
      else if (base[i] < 0.05)
        mp[i] = static_cast<std::uint8_t>(MaskClass::kWater);
      else
        mp[i] = static_cast<std::uint8_t>(MaskClass::kLandVegetated);
    }
  }

  // past S2 LAI frames: the sensor sees cloud, not ground
  s.s2_lai_past.resize(std::size_t(kPastFrames) * plane);
  for (int f = 0; f < kPastFrames; ++f) {
    float* lp = s.s2_lai_past.data() + static_cast<std::size_t>(f) * plane;
    const std::uint8_t* mp = s.masks.data() + static_cast<std::size_t>(f) * plane;
    for (std::size_t i = 0; i < plane; ++i)
      lp[i] = mp[i] == static_cast<std::uint8_t>(MaskClass::kCloud)
                  ? 0.0f
                  : static_cast<float>(lai[f][i]);
  }

  s.lai_target.resize(plane);
  for (std::size_t i = 0; i < plane; ++i)
    s.lai_target[i] = static_cast<float>(lai[kTimestamps - 1][i]);

  return s;
}

std::vector<SceneSample> generate_series(const SceneConfig& cfg) {
  cfg.validate();
  std::vector<SceneSample> out;
  out.reserve(static_cast<std::size_t>(cfg.n_samples));
  for (int i = 0; i < cfg.n_samples; ++i)
    out.push_back(generate_sample(cfg, static_cast<std::uint64_t>(i)));
  return out;
}

double past_cloud_fraction(const SceneSample& sample) {
  const std::size_t plane = sample.plane();
  std::size_t clouds = 0;
  for (int f = 0; f < kPastFrames; ++f) {
    const std::uint8_t* mp =
        sample.masks.data() + static_cast<std::size_t>(f) * plane;
    for (std::size_t i = 0; i < plane; ++i)
      if (mp[i] == static_cast<std::uint8_t>(MaskClass::kCloud)) ++clouds;
  }
  return static_cast<double>(clouds) /
         static_cast<double>(kPastFrames * plane);
}

std::pair<std::vector<SceneSample>, std::vector<SceneSample>>
split_by_cloudiness(const std::vector<SceneSample>& samples) {
  std::vector<SceneSample> non_cloudy, cloudy;
  for (const auto& s : samples) {
    const double f = past_cloud_fraction(s);
    if (f < kNonCloudyMaxFraction)
      non_cloudy.push_back(s);
    else if (f > kCloudyMinFraction)
      cloudy.push_back(s);
  }
  return {std::move(non_cloudy), std::move(cloudy)};
}

}  // namespace lai
