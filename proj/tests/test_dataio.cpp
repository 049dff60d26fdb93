#include "lai/dataio.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "doctest.h"
#include "lai/rng.hpp"
#include "lai/synthgen.hpp"

using namespace lai;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* tag) {
  fs::path p = fs::temp_directory_path() /
               (std::string("lai_test_") + tag + "_" +
                std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<char> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::vector<char>((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
}

SceneSample random_sample(std::uint64_t seed, int tile) {
  SceneConfig cfg;
  cfg.seed = seed;
  cfg.tile_size = tile;
  return generate_sample(cfg, 0);
}

}  // namespace

TEST_CASE("seasonality features at the reference days") {
  const Seasonality d0 = seasonality_features(0.0);
  CHECK(d0.sin_component == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(d0.cos_component == doctest::Approx(1.0).epsilon(1e-12));

  const Seasonality half = seasonality_features(365.25 / 2.0);
  CHECK(half.sin_component == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
  CHECK(half.cos_component == doctest::Approx(-1.0).epsilon(1e-12));

  // frozen from a 30-digit evaluation of sin/cos(2*pi*100/365.25)
  const Seasonality d100 = seasonality_features(100.0);
  CHECK(d100.sin_component ==
        doctest::Approx(0.988853706420588403).epsilon(1e-12));
  CHECK(d100.cos_component ==
        doctest::Approx(-0.148890386856454777).epsilon(1e-12));
}

TEST_CASE("seasonality is periodic and lies on the unit circle") {
  for (double d : {0.0, 17.3, 100.0, 200.5, 365.0, 400.0}) {
    const Seasonality a = seasonality_features(d);
    const Seasonality b = seasonality_features(d + kYearDays);
    CHECK(a.sin_component == doctest::Approx(b.sin_component).epsilon(1e-12));
    CHECK(a.cos_component == doctest::Approx(b.cos_component).epsilon(1e-12));
    CHECK(a.sin_component * a.sin_component +
              a.cos_component * a.cos_component ==
          doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("one_hot_masks puts a single one per timestamp and pixel") {
  const std::uint8_t single[1] = {2};
  Tensor<float> oh = one_hot_masks<float>(single, 1, 1, 1);
  CHECK(oh.shape() == Shape{6, 1, 1});
  const float expected[6] = {0, 0, 1, 0, 0, 0};
  for (int c = 0; c < 6; ++c)
    CHECK(oh.data()[static_cast<std::size_t>(c)] == expected[c]);

  std::vector<std::uint8_t> veg(
      16, static_cast<std::uint8_t>(MaskClass::kLandVegetated));
  Tensor<float> all_veg = one_hot_masks<float>(veg.data(), 1, 4, 4);
  for (int c = 0; c < 6; ++c)
    for (int i = 0; i < 16; ++i)
      CHECK(all_veg.data()[static_cast<std::size_t>(c) * 16 + i] ==
            (c == 4 ? 1.0f : 0.0f));
}

TEST_CASE("one_hot_masks channel sums are exactly one over random masks") {
  Rng rng(21);
  std::vector<std::uint8_t> masks(3 * 8 * 8);
  for (auto& m : masks) m = static_cast<std::uint8_t>(rng.below(6));
  Tensor<float> oh = one_hot_masks<float>(masks.data(), 3, 8, 8);
  for (int t = 0; t < 3; ++t)
    for (int i = 0; i < 64; ++i) {
      float s = 0.0f;
      for (int c = 0; c < 6; ++c)
        s += oh.data()[(static_cast<std::size_t>(t) * 6 + c) * 64 + i];
      CHECK(s == 1.0f);
    }

  std::vector<std::uint8_t> bad = {7};
  CHECK_THROWS_AS(one_hot_masks<float>(bad.data(), 1, 1, 1),
                  DataCorruptionError);
}

TEST_CASE("valid_pixel_mask excludes no-data, cloud and shadow") {
  std::vector<std::uint8_t> all_cloud(9, static_cast<std::uint8_t>(MaskClass::kCloud));
  Tensor<float> v = valid_pixel_mask<float>(all_cloud.data(), 3, 3);
  for (float x : v.data()) CHECK(x == 0.0f);

  std::vector<std::uint8_t> water(9, static_cast<std::uint8_t>(MaskClass::kWater));
  Tensor<float> vw = valid_pixel_mask<float>(water.data(), 3, 3);
  for (float x : vw.data()) CHECK(x == 1.0f);

  // mixed tile: count equals H*W - (clouded + shadowed + no-data)
  Rng rng(5);
  std::vector<std::uint8_t> mixed(64);
  int invalid = 0;
  for (auto& m : mixed) {
    m = static_cast<std::uint8_t>(rng.below(6));
    if (!mask_class_valid(m)) ++invalid;
  }
  Tensor<float> vm = valid_pixel_mask<float>(mixed.data(), 8, 8);
  float total = 0.0f;
  for (float x : vm.data()) total += x;
  CHECK(total == static_cast<float>(64 - invalid));
}

TEST_CASE("normalize standardizes inputs and leaves the target alone") {
  SceneSample s = random_sample(3, 16);
  const SceneSample identity = normalize(s, NormStats{0.0, 1.0, 0.0, 1.0});
  CHECK(identity.s1 == s.s1);
  CHECK(identity.s2_lai_past == s.s2_lai_past);
  CHECK(identity.lai_target == s.lai_target);

  CHECK_THROWS_AS(normalize(s, NormStats{0.0, 0.0, 0.0, 1.0}),
                  DegenerateStatsError);

  // moments after normalizing a large batch land near (0, 1)
  SceneConfig cfg;
  cfg.seed = 77;
  cfg.tile_size = 32;
  cfg.n_samples = 12;
  cfg.cloud_fraction = 0.0;  // keep every pixel in the lai stats
  const auto samples = generate_series(cfg);
  const NormStats stats = compute_norm_stats(samples);
  const auto normed = normalize(samples, stats);
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (const auto& ns : normed)
    for (float v : ns.s1) {
      sum += v;
      sq += static_cast<double>(v) * v;
      ++n;
    }
  const double mean = sum / static_cast<double>(n);
  const double var = sq / static_cast<double>(n) - mean * mean;
  CHECK(std::abs(mean) < 0.1);
  CHECK(std::abs(var - 1.0) < 0.1);
}

TEST_CASE("tilepack: empty pack round-trips") {
  const fs::path dir = temp_dir("pack_empty");
  save_tilepack({}, "train", dir / "p");
  std::string split;
  const auto loaded = load_tilepack(dir / "p", &split);
  CHECK(loaded.empty());
  CHECK(split == "train");
  fs::remove_all(dir);
}

TEST_CASE("tilepack: three random samples round-trip bit-exactly") {
  const fs::path dir = temp_dir("pack_rt");
  std::vector<SceneSample> samples;
  for (std::uint64_t i = 0; i < 3; ++i)
    samples.push_back(random_sample(100 + i, 16));
  save_tilepack(samples, "cloudy", dir / "a");

  std::string split;
  const auto loaded = load_tilepack(dir / "a", &split);
  CHECK(split == "cloudy");
  REQUIRE(loaded.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(loaded[i].s1 == samples[i].s1);
    CHECK(loaded[i].s2_lai_past == samples[i].s2_lai_past);
    CHECK(loaded[i].masks == samples[i].masks);
    CHECK(loaded[i].lai_target == samples[i].lai_target);
    CHECK(loaded[i].day_of_year == samples[i].day_of_year);
  }

  // byte-level comparison: saving the loaded samples reproduces every blob
  save_tilepack(loaded, "cloudy", dir / "b");
  for (const char* f :
       {"manifest.json", "s1.bin", "s2_lai.bin", "masks.bin", "target.bin"})
    CHECK(read_bytes(dir / "a" / f) == read_bytes(dir / "b" / f));
  fs::remove_all(dir);
}

TEST_CASE("tilepack: corruption yields the distinct load errors") {
  const fs::path dir = temp_dir("pack_err");
  std::vector<SceneSample> samples = {random_sample(9, 8)};
  save_tilepack(samples, "train", dir / "p");

  SUBCASE("truncated blob names the offending field") {
    const fs::path blob = dir / "p" / "s2_lai.bin";
    const auto bytes = read_bytes(blob);
    std::ofstream out(blob, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 4));
    out.close();
    try {
      load_tilepack(dir / "p");
      FAIL("expected PackTruncatedError");
    } catch (const PackTruncatedError& e) {
      CHECK(e.field() == "s2_lai.bin");
    }
  }

  SUBCASE("oversized blob raises the size-disagreement error") {
    std::ofstream out(dir / "p" / "masks.bin",
                      std::ios::binary | std::ios::app);
    const float extra = 0.0f;
    out.write(reinterpret_cast<const char*>(&extra), sizeof(extra));
    out.close();
    CHECK_THROWS_AS(load_tilepack(dir / "p"), PackSizeError);
  }

  SUBCASE("version mismatch is its own error") {
    std::ifstream in(dir / "p" / "manifest.json");
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    in.close();
    const auto pos = text.find("\"format_version\": 1");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 19, "\"format_version\": 9");
    std::ofstream out(dir / "p" / "manifest.json", std::ios::trunc);
    out << text;
    out.close();
    CHECK_THROWS_AS(load_tilepack(dir / "p"), PackVersionError);
  }

  SUBCASE("non-class values in masks.bin are data corruption") {
    const fs::path blob = dir / "p" / "masks.bin";
    auto bytes = read_bytes(blob);
    const float bad = 11.0f;
    std::memcpy(bytes.data(), &bad, sizeof(bad));
    std::ofstream out(blob, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.close();
    CHECK_THROWS_AS(load_tilepack(dir / "p"), DataCorruptionError);
  }

  fs::remove_all(dir);
}

TEST_CASE("tilepack rejects unknown split labels") {
  const fs::path dir = temp_dir("pack_split");
  CHECK_THROWS_AS(save_tilepack({}, "validation", dir / "p"), PackError);
  fs::remove_all(dir);
}
