#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "lai/dataio.hpp"

namespace lai {

// Procedural scene generator: correlated S1/S2/LAI/mask time series with
// controllable cloud occlusion. Generation is a pure function of the config;
// each sample draws from an independent substream of (seed, sample index).
struct SceneConfig {
  std::uint64_t seed = 0;
  int tile_size = 32;
  int n_samples = 1;
  // expected fraction of occluded pixels in past frames; the target frame
  // is occluded at a quarter of this
  double cloud_fraction = 0.3;
  double s1_noise_std = 0.15;
  // LAI change magnitude between consecutive timestamps
  double temporal_drift = 0.1;
  // fixed day-of-year; uniform in [0, 366) when unset
  std::optional<double> fixed_day;

  void validate() const;
};

std::vector<SceneSample> generate_series(const SceneConfig& cfg);

// Single sample from substream `index`; generate_series concatenates these.
SceneSample generate_sample(const SceneConfig& cfg, std::uint64_t index);

// Fraction of cloud-class pixels pooled over the two past frames.
double past_cloud_fraction(const SceneSample& sample);

// non_cloudy: past cloud fraction < 5%; cloudy: > 25%; the band between is
// dropped from both eval splits.
std::pair<std::vector<SceneSample>, std::vector<SceneSample>>
split_by_cloudiness(const std::vector<SceneSample>& samples);

inline constexpr double kNonCloudyMaxFraction = 0.05;
inline constexpr double kCloudyMinFraction = 0.25;

}  // namespace lai
