#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lai/tensor.hpp"

namespace lai {

// Semantic mask classes. Indices are part of the on-disk format and of the
// one-hot channel layout; do not reorder.
enum class MaskClass : std::uint8_t {
  kNoData = 0,
  kCloud = 1,
  kCloudShadow = 2,
  kWater = 3,
  kLandVegetated = 4,
  kLandBare = 5,
};
inline constexpr int kMaskClassCount = 6;

inline constexpr int kTimestamps = 3;      // t-2, t-1, t
inline constexpr int kPolarizations = 2;   // VH, VV
inline constexpr int kPastFrames = 2;      // t-2, t-1
inline constexpr double kYearDays = 365.25;

// One training/eval unit. All arrays are row-major over [..][tile][tile];
// S1 channel order is (timestamp, polarization) with VH before VV.
struct SceneSample {
  int tile = 0;
  std::vector<float> s1;           // [3][2][tile][tile], linear backscatter
  std::vector<float> s2_lai_past;  // [2][tile][tile], LAI at t-2, t-1
  std::vector<std::uint8_t> masks; // [3][tile][tile], MaskClass values
  float day_of_year = 0.0f;        // in [0, 366)
  std::vector<float> lai_target;   // [tile][tile], LAI at t, native units

  std::size_t plane() const {
    return static_cast<std::size_t>(tile) * static_cast<std::size_t>(tile);
  }
};

struct Seasonality {
  double sin_component = 0.0;
  double cos_component = 0.0;
};

// (sin, cos) of the fractional year position; periodic in 365.25 days.
Seasonality seasonality_features(double day_of_year);

// masks [T][H][W] with values 0..5 -> one-hot [T*6, H, W].
// Channel t*6+c is 1 exactly where masks[t] == c.
template <typename T>
Tensor<T> one_hot_masks(const std::uint8_t* masks, int t_count, int h, int w);

// 0 where the class is no_data/cloud/cloud_shadow, 1 otherwise.
template <typename T>
Tensor<T> valid_pixel_mask(const std::uint8_t* mask, int h, int w);

inline bool mask_class_valid(std::uint8_t c) {
  return c != static_cast<std::uint8_t>(MaskClass::kNoData) &&
         c != static_cast<std::uint8_t>(MaskClass::kCloud) &&
         c != static_cast<std::uint8_t>(MaskClass::kCloudShadow);
}

// Standardization statistics for the two network input fields.
struct NormStats {
  double s1_mean = 0.0;
  double s1_std = 1.0;
  double lai_mean = 0.0;
  double lai_std = 1.0;
};

// Pooled moments over a sample set: S1 over all pixels, past LAI over
// pixels whose frame mask is not clouded (zero-filled cloud pixels would
// skew the moments).
NormStats compute_norm_stats(const std::vector<SceneSample>& samples);

// Standardizes s1 and s2_lai_past; masks, day and target stay untouched
// (metrics are reported in native LAI units).
SceneSample normalize(const SceneSample& sample, const NormStats& stats);
std::vector<SceneSample> normalize(const std::vector<SceneSample>& samples,
                                   const NormStats& stats);

inline const std::array<std::string, 4> kSplitLabels = {
    "train", "non_cloudy", "cloudy", "unique_areas"};

// On-disk dataset container: manifest.json plus four raw f32le blobs
// (s1.bin, s2_lai.bin, masks.bin, target.bin), samples concatenated in
// manifest order. Round-trips bit-exactly.
void save_tilepack(const std::vector<SceneSample>& samples,
                   const std::string& split_label,
                   const std::filesystem::path& dir);

std::vector<SceneSample> load_tilepack(const std::filesystem::path& dir,
                                       std::string* split_label = nullptr);

}  // namespace lai
