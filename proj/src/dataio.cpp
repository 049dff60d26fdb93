#include "lai/dataio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "json.hpp"

static_assert(std::endian::native == std::endian::little,
              "tilepack blobs are written as native little-endian floats");

namespace lai {

namespace fs = std::filesystem;
using nlohmann::json;

Seasonality seasonality_features(double day_of_year) {
  const double phase = 2.0 * std::numbers::pi * day_of_year / kYearDays;
  return {std::sin(phase), std::cos(phase)};
}

template <typename T>
Tensor<T> one_hot_masks(const std::uint8_t* masks, int t_count, int h, int w) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Tensor<T> out = Tensor<T>::zeros({t_count * kMaskClassCount, h, w});
  T* od = out.data().data();
  for (int t = 0; t < t_count; ++t) {
    const std::uint8_t* mp = masks + static_cast<std::size_t>(t) * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      if (mp[i] >= kMaskClassCount)
        throw DataCorruptionError("mask class " + std::to_string(mp[i]) +
                                  " out of range [0,5]");
      od[(static_cast<std::size_t>(t) * kMaskClassCount + mp[i]) * plane + i] =
          T(1);
    }
  }
  return out;
}

template <typename T>
Tensor<T> valid_pixel_mask(const std::uint8_t* mask, int h, int w) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Tensor<T> out = Tensor<T>::zeros({h, w});
  T* od = out.data().data();
  for (std::size_t i = 0; i < plane; ++i) {
    if (mask[i] >= kMaskClassCount)
      throw DataCorruptionError("mask class " + std::to_string(mask[i]) +
                                " out of range [0,5]");
    od[i] = mask_class_valid(mask[i]) ? T(1) : T(0);
  }
  return out;
}

NormStats compute_norm_stats(const std::vector<SceneSample>& samples) {
  double s1_sum = 0.0, s1_sq = 0.0;
  double lai_sum = 0.0, lai_sq = 0.0;
  std::size_t s1_n = 0, lai_n = 0;
  for (const auto& s : samples) {
    for (float v : s.s1) {
      s1_sum += v;
      s1_sq += static_cast<double>(v) * v;
    }
    s1_n += s.s1.size();
    const std::size_t plane = s.plane();
    for (int f = 0; f < kPastFrames; ++f) {
      const std::uint8_t* mp = s.masks.data() + static_cast<std::size_t>(f) * plane;
      const float* lp = s.s2_lai_past.data() + static_cast<std::size_t>(f) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        if (mp[i] == static_cast<std::uint8_t>(MaskClass::kCloud)) continue;
        lai_sum += lp[i];
        lai_sq += static_cast<double>(lp[i]) * lp[i];
        ++lai_n;
      }
    }
  }
  NormStats st;
  if (s1_n > 0) {
    st.s1_mean = s1_sum / static_cast<double>(s1_n);
    st.s1_std = std::sqrt(
        std::max(0.0, s1_sq / static_cast<double>(s1_n) - st.s1_mean * st.s1_mean));
  }
  if (lai_n > 0) {
    st.lai_mean = lai_sum / static_cast<double>(lai_n);
    st.lai_std = std::sqrt(std::max(
        0.0, lai_sq / static_cast<double>(lai_n) - st.lai_mean * st.lai_mean));
  }
  return st;
}

SceneSample normalize(const SceneSample& sample, const NormStats& stats) {
  if (!(stats.s1_std > 0.0) || !(stats.lai_std > 0.0))
    throw DegenerateStatsError("normalization std must be positive");
  SceneSample out = sample;
  const float s1_mean = static_cast<float>(stats.s1_mean);
  const float s1_std = static_cast<float>(stats.s1_std);
  const float lai_mean = static_cast<float>(stats.lai_mean);
  const float lai_std = static_cast<float>(stats.lai_std);
  for (auto& v : out.s1) v = (v - s1_mean) / s1_std;
  for (auto& v : out.s2_lai_past) v = (v - lai_mean) / lai_std;
  return out;
}

std::vector<SceneSample> normalize(const std::vector<SceneSample>& samples,
                                   const NormStats& stats) {
  std::vector<SceneSample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(normalize(s, stats));
  return out;
}

namespace {

constexpr int kPackVersion = 1;

struct BlobSpec {
  const char* file;
  // floats per sample at tile size t
  std::size_t (*count)(int t);
};

std::size_t plane_of(int t) {
  return static_cast<std::size_t>(t) * static_cast<std::size_t>(t);
}

const BlobSpec kBlobs[] = {
    {"s1.bin", [](int t) { return std::size_t(kTimestamps * kPolarizations) * plane_of(t); }},
    {"s2_lai.bin", [](int t) { return std::size_t(kPastFrames) * plane_of(t); }},
    {"masks.bin", [](int t) { return std::size_t(kTimestamps) * plane_of(t); }},
    {"target.bin", [](int t) { return plane_of(t); }},
};

void write_blob(const fs::path& path, const std::vector<float>& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw PackError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(float)));
  if (!out) throw PackError("write failed for " + path.string());
}

std::vector<float> read_blob(const fs::path& path, const char* field,
                             std::size_t expected_floats) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PackError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const std::size_t actual = static_cast<std::size_t>(in.tellg());
  const std::size_t expected = expected_floats * sizeof(float);
  if (actual < expected) throw PackTruncatedError(field, expected, actual);
  if (actual > expected)
    throw PackSizeError("blob '" + std::string(field) + "' holds " +
                        std::to_string(actual) + " bytes but the manifest implies " +
                        std::to_string(expected));
  in.seekg(0);
  std::vector<float> data(expected_floats);
  in.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(expected));
  if (!in) throw PackError("read failed for " + path.string());
  return data;
}

}  // namespace

void save_tilepack(const std::vector<SceneSample>& samples,
                   const std::string& split_label, const fs::path& dir) {
  if (std::find(kSplitLabels.begin(), kSplitLabels.end(), split_label) ==
      kSplitLabels.end())
    throw PackError("unknown split label '" + split_label + "'");
  int tile = samples.empty() ? 0 : samples.front().tile;
  for (const auto& s : samples)
    if (s.tile != tile)
      throw ContractError("tilepack samples must share one tile size");

  fs::create_directories(dir);

  json manifest;
  manifest["format_version"] = kPackVersion;
  manifest["tile_size"] = tile;
  manifest["sample_count"] = samples.size();
  manifest["dtype"] = "f32le";
  manifest["split"] = split_label;
  json days = json::array();
  for (const auto& s : samples) days.push_back(s.day_of_year);
  manifest["day_of_year"] = days;
  {
    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    if (!out) throw PackError("cannot write manifest in " + dir.string());
    out << manifest.dump(2) << "\n";
  }

  std::vector<float> s1, s2, masks, target;
  for (const auto& s : samples) {
    s1.insert(s1.end(), s.s1.begin(), s.s1.end());
    s2.insert(s2.end(), s.s2_lai_past.begin(), s.s2_lai_past.end());
    for (std::uint8_t m : s.masks) masks.push_back(static_cast<float>(m));
    target.insert(target.end(), s.lai_target.begin(), s.lai_target.end());
  }
  write_blob(dir / "s1.bin", s1);
  write_blob(dir / "s2_lai.bin", s2);
  write_blob(dir / "masks.bin", masks);
  write_blob(dir / "target.bin", target);
}

std::vector<SceneSample> load_tilepack(const fs::path& dir,
                                       std::string* split_label) {
  json manifest;
  {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw PackError("cannot open manifest in " + dir.string());
    try {
      in >> manifest;
    } catch (const json::exception& e) {
      throw PackError("manifest parse error in " + dir.string() + ": " +
                      e.what());
    }
  }
  const int version = manifest.value("format_version", -1);
  if (version != kPackVersion)
    throw PackVersionError("tilepack format version " +
                           std::to_string(version) + ", expected " +
                           std::to_string(kPackVersion));
  if (manifest.value("dtype", "") != "f32le")
    throw PackError("unsupported dtype '" + manifest.value("dtype", "") + "'");
  const std::string split = manifest.value("split", "");
  if (std::find(kSplitLabels.begin(), kSplitLabels.end(), split) ==
      kSplitLabels.end())
    throw PackError("unknown split label '" + split + "' in manifest");
  if (split_label) *split_label = split;
  const int tile = manifest.value("tile_size", 0);
  const std::size_t count = manifest.value("sample_count", std::size_t(0));
  if (count > 0 && tile <= 0)
    throw PackError("non-empty pack with tile_size " + std::to_string(tile));
  const auto& days = manifest.at("day_of_year");
  if (days.size() != count)
    throw PackSizeError("manifest lists " + std::to_string(days.size()) +
                        " day_of_year entries for " + std::to_string(count) +
                        " samples");

  std::vector<float> blobs[4];
  for (int b = 0; b < 4; ++b)
    blobs[b] = read_blob(dir / kBlobs[b].file, kBlobs[b].file,
                         count * kBlobs[b].count(tile));

  std::vector<SceneSample> samples(count);
  const std::size_t plane = plane_of(tile);
  for (std::size_t i = 0; i < count; ++i) {
    SceneSample& s = samples[i];
    s.tile = tile;
    s.day_of_year = days[i].get<float>();
    const std::size_t s1_n = kBlobs[0].count(tile);
    const std::size_t s2_n = kBlobs[1].count(tile);
    const std::size_t mk_n = kBlobs[2].count(tile);
    s.s1.assign(blobs[0].begin() + i * s1_n, blobs[0].begin() + (i + 1) * s1_n);
    s.s2_lai_past.assign(blobs[1].begin() + i * s2_n,
                         blobs[1].begin() + (i + 1) * s2_n);
    s.masks.resize(mk_n);
    for (std::size_t j = 0; j < mk_n; ++j) {
      const float v = blobs[2][i * mk_n + j];
      if (!(v >= 0.0f) || v != std::floor(v) || v >= kMaskClassCount)
        throw DataCorruptionError("masks.bin holds non-class value " +
                                  std::to_string(v));
      s.masks[j] = static_cast<std::uint8_t>(v);
    }
    s.lai_target.assign(blobs[3].begin() + i * plane,
                        blobs[3].begin() + (i + 1) * plane);
  }
  return samples;
}

template Tensor<float> one_hot_masks<float>(const std::uint8_t*, int, int, int);
template Tensor<double> one_hot_masks<double>(const std::uint8_t*, int, int, int);
template Tensor<float> valid_pixel_mask<float>(const std::uint8_t*, int, int);
template Tensor<double> valid_pixel_mask<double>(const std::uint8_t*, int, int);

}  // namespace lai
