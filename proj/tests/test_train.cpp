#include "lai/train.hpp"

#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "lai/synthgen.hpp"
#include "oracles.hpp"

using namespace lai;
namespace fs = std::filesystem;

namespace {

const ModelConfig kMicro{.enc_depth = 2,
                         .enc_base = 8,
                         .dec_depth = 1,
                         .dec_base = 8,
                         .feature_channels = 8,
                         .mask_embed = 4,
                         .season_hidden = 8};

std::vector<SceneSample> gen(std::uint64_t seed, int n, int tile,
                             double cloud = 0.0) {
  SceneConfig cfg;
  cfg.seed = seed;
  cfg.tile_size = tile;
  cfg.n_samples = n;
  cfg.cloud_fraction = cloud;
  return generate_series(cfg);
}

std::vector<SceneSample> normalized(std::vector<SceneSample> raw) {
  const NormStats st = compute_norm_stats(raw);
  return normalize(raw, st);
}

TrainConfig quick_cfg(int epochs, int batch, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = batch;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("lr schedule follows the two-decay step pattern") {
  TrainConfig cfg;  // 100 epochs, lr0 1e-3, factor 0.2, 2 decays
  CHECK(lr_schedule(cfg, 0) == doctest::Approx(0.001).epsilon(1e-12));
  CHECK(lr_schedule(cfg, 32) == doctest::Approx(0.001).epsilon(1e-12));
  CHECK(lr_schedule(cfg, 33) == doctest::Approx(0.0002).epsilon(1e-12));
  CHECK(lr_schedule(cfg, 65) == doctest::Approx(0.0002).epsilon(1e-12));
  CHECK(lr_schedule(cfg, 66) == doctest::Approx(0.00004).epsilon(1e-12));
  CHECK(lr_schedule(cfg, 99) == doctest::Approx(0.00004).epsilon(1e-12));

  SUBCASE("factor one keeps the rate constant") {
    cfg.decay_factor = 1.0;
    for (int e = 0; e < 100; e += 7)
      CHECK(lr_schedule(cfg, e) == cfg.lr0);
  }

  SUBCASE("three epochs decay at every boundary") {
    cfg.epochs = 3;
    CHECK(lr_schedule(cfg, 0) == doctest::Approx(cfg.lr0));
    CHECK(lr_schedule(cfg, 1) == doctest::Approx(0.2 * cfg.lr0));
    CHECK(lr_schedule(cfg, 2) == doctest::Approx(0.04 * cfg.lr0));
  }

  SUBCASE("non-increasing with exactly n_decays+1 distinct values") {
    std::vector<double> values;
    double prev = cfg.lr0 + 1.0;
    for (int e = 0; e < cfg.epochs; ++e) {
      const double lr = lr_schedule(cfg, e);
      CHECK(lr <= prev);
      if (values.empty() || values.back() != lr) values.push_back(lr);
      prev = lr;
    }
    CHECK(values.size() == static_cast<std::size_t>(cfg.n_decays) + 1);
  }

  CHECK_THROWS_AS(lr_schedule(cfg, -1), ContractError);
  CHECK_THROWS_AS(lr_schedule(cfg, cfg.epochs), ContractError);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  Tensor<float> w = Tensor<float>::from_data({3}, {1.0f, -2.0f, 0.5f});
  w.set_requires_grad(true);
  w.grad_buffer();  // allocated, all zeros
  NamedParams params = {{"w", w}};
  Adam adam(0.9, 0.999, 1e-8);
  adam.step(params, 0.1);
  CHECK(adam.steps() == 1);
  CHECK(w.data()[0] == 1.0f);
  CHECK(w.data()[1] == -2.0f);
  CHECK(w.data()[2] == 0.5f);
}

TEST_CASE("adam: first step with unit gradient moves by about -lr") {
  Tensor<float> w = Tensor<float>::from_data({1}, {1.0f});
  w.set_requires_grad(true);
  w.grad_buffer()[0] = 1.0f;
  NamedParams params = {{"w", w}};
  Adam adam(0.9, 0.999, 1e-8);
  adam.step(params, 0.1);
  CHECK(std::abs((w.data()[0] - 1.0f) + 0.1) < 1e-6);
}

TEST_CASE("adam: NaN gradients raise divergence with the step index") {
  Tensor<float> w = Tensor<float>::from_data({1}, {1.0f});
  w.set_requires_grad(true);
  w.grad_buffer()[0] = std::nanf("");
  NamedParams params = {{"w", w}};
  Adam adam(0.9, 0.999, 1e-8);
  try {
    adam.step(params, 0.1);
    FAIL("expected TrainingDivergenceError");
  } catch (const TrainingDivergenceError& e) {
    CHECK(e.step() == 1);
  }
}

TEST_CASE("pretrain is deterministic: identical loss trajectories") {
  const auto train = normalized(gen(51, 6, 16));
  std::vector<double> run1, run2;
  auto record1 = [&run1](const StepRecord& r) { run1.push_back(r.loss); };
  auto record2 = [&run2](const StepRecord& r) { run2.push_back(r.loss); };
  pretrain_encoder(EncoderId::kEnc2, kMicro, train, quick_cfg(7, 2, 99), {},
                   nullptr, record1);
  pretrain_encoder(EncoderId::kEnc2, kMicro, train, quick_cfg(7, 2, 99), {},
                   nullptr, record2);
  REQUIRE(run1.size() == run2.size());
  REQUIRE(run1.size() >= 20);
  for (std::size_t i = 0; i < run1.size(); ++i) CHECK(run1[i] == run2[i]);
}

TEST_CASE("pretrain reduces the loss and reloads bit-exactly") {
  const auto train = normalized(gen(52, 6, 16));
  const TrainConfig cfg = quick_cfg(30, 3, 7);
  EncoderTrainResult res =
      pretrain_encoder(EncoderId::kEnc2, kMicro, train, cfg);
  REQUIRE(res.epoch_loss.size() == 30);
  CHECK(res.epoch_loss.back() < 0.5 * res.epoch_loss.front());

  // checkpoint reload reproduces the loss on a fixed batch bit-exactly
  const fs::path dir = fs::temp_directory_path() /
                       ("lai_train_test_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  save_checkpoint(dir, {"encoder2", kMicro, {}},
                  named_params(res.encoder, "enc2"));

  std::vector<int> idx = {0, 1, 2};
  Batch<float> batch = assemble_batch<float>(train, idx, {});
  NoGradGuard ng;
  const float loss_before =
      masked_mse(encoder_forward(res.encoder, batch.s2, batch.masks,
                                 batch.season)
                     .head,
                 batch.target, batch.valid)
          .item();

  Rng rng(1);
  EncoderParams<float> fresh = make_encoder<float>(kMicro, EncoderId::kEnc2, rng);
  load_checkpoint_params(dir, named_params(fresh, "enc2"));
  const float loss_after =
      masked_mse(encoder_forward(fresh, batch.s2, batch.masks, batch.season)
                     .head,
                 batch.target, batch.valid)
          .item();
  CHECK(loss_before == loss_after);
  fs::remove_all(dir);
}

TEST_CASE("pretrain raises when an entire epoch is masked out") {
  auto train = gen(53, 4, 16);
  for (auto& s : train)
    for (std::size_t i = 2 * s.plane(); i < 3 * s.plane(); ++i)
      s.masks[i] = static_cast<std::uint8_t>(MaskClass::kCloud);
  CHECK_THROWS_AS(pretrain_encoder(EncoderId::kEnc1, kMicro, normalized(train),
                                   quick_cfg(2, 2, 1)),
                  DegenerateDatasetError);
}

TEST_CASE("finetune: step-0 continuity and alpha=beta=0 gradient behaviour") {
  const auto train = normalized(gen(54, 6, 16, 0.15));
  const TrainConfig cfg = quick_cfg(4, 3, 11);
  EncoderTrainResult e1 =
      pretrain_encoder(EncoderId::kEnc1, kMicro, train, cfg);
  EncoderTrainResult e2 =
      pretrain_encoder(EncoderId::kEnc2, kMicro, train, cfg);

  ModelParams<float> model0 = init_full_model(e1.encoder, e2.encoder, kMicro, 77);
  std::vector<int> idx = {0, 1, 2, 3};
  Batch<float> batch = assemble_batch<float>(train, idx, {});

  SUBCASE("in-model heads equal the standalone encoders elementwise") {
    NoGradGuard ng;
    ModelOut<float> out = full_forward(model0, batch);
    EncoderOut<float> alone1 =
        encoder_forward(e1.encoder, batch.s1, batch.masks, batch.season);
    EncoderOut<float> alone2 =
        encoder_forward(e2.encoder, batch.s2, batch.masks, batch.season);
    for (std::size_t i = 0; i < out.enc1_head.numel(); ++i) {
      CHECK(out.enc1_head.data()[i] == alone1.head.data()[i]);
      CHECK(out.enc2_head.data()[i] == alone2.head.data()[i]);
    }
  }

  SUBCASE("alpha=beta=0 zeroes the head gradients, decoder path unchanged") {
    auto& tape = Tape<float>::current();
    NamedParams params = named_params(model0);

    tape.clear();
    for (auto& [n, t] : params) t.zero_grad();
    ModelOut<float> out = full_forward(model0, batch);
    backward(combined_loss(batch.target, out.dec, out.enc1_head, out.enc2_head,
                           batch.valid, LossWeights{0.0, 0.0}));
    double head_norm = 0.0;
    for (const char* name : {"enc1", "enc2"}) {
      EncoderParams<float>& enc =
          name[3] == '1' ? model0.enc1 : model0.enc2;
      for (float g : enc.head.w.grad()) head_norm += std::abs(g);
      for (float g : enc.head.b.grad()) head_norm += std::abs(g);
    }
    CHECK(head_norm == 0.0);
    std::vector<std::vector<float>> combined_grads;
    for (auto& [n, t] : params)
      combined_grads.emplace_back(t.has_grad()
                                      ? std::vector<float>(t.grad().begin(),
                                                           t.grad().end())
                                      : std::vector<float>(t.numel(), 0.0f));

    tape.clear();
    for (auto& [n, t] : params) t.zero_grad();
    ModelOut<float> out2 = full_forward(model0, batch);
    backward(masked_mse(out2.dec, batch.target, batch.valid));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& t = params[i].second;
      std::vector<float> plain(t.has_grad()
                                   ? std::vector<float>(t.grad().begin(),
                                                        t.grad().end())
                                   : std::vector<float>(t.numel(), 0.0f));
      for (std::size_t j = 0; j < plain.size(); ++j)
        CHECK(plain[j] == combined_grads[i][j]);
    }
    tape.clear();
  }

  SUBCASE("training reduces the combined loss on the overfit set") {
    ModelTrainResult full = finetune_full(e1.encoder, e2.encoder, kMicro,
                                          train, quick_cfg(20, 3, 5));
    REQUIRE(full.epoch_loss.size() == 20);
    CHECK(full.epoch_loss.back() < 0.6 * full.epoch_loss.front());
  }
}

TEST_CASE("ablation harness produces the six-variant, three-split table") {
  AblationData data;
  data.train = gen(60, 10, 16, 0.3);
  SceneConfig eval_cfg;
  eval_cfg.tile_size = 16;
  eval_cfg.cloud_fraction = 0.3;
  eval_cfg.seed = 61;
  for (std::uint64_t i = 0; data.non_cloudy.size() < 3 || data.cloudy.size() < 3;
       ++i) {
    REQUIRE(i < 500);
    SceneSample s = generate_sample(eval_cfg, i);
    if (past_cloud_fraction(s) < kNonCloudyMaxFraction)
      data.non_cloudy.push_back(std::move(s));
    else if (past_cloud_fraction(s) > kCloudyMinFraction)
      data.cloudy.push_back(std::move(s));
  }
  data.unique_areas = gen(62, 3, 16, 0.3);

  const MetricsReport report =
      run_ablations(data, kMicro, quick_cfg(2, 4, 21));
  REQUIRE(report.size() == 18);
  const char* splits[] = {"non_cloudy", "cloudy", "unique_areas"};
  for (std::size_t v = 0; v < kAblationVariants.size(); ++v)
    for (std::size_t s = 0; s < 3; ++s) {
      const MetricsRow& row = report[v * 3 + s];
      CHECK(row.variant == kAblationVariants[v]);
      CHECK(row.split == splits[s]);
      CHECK(std::isfinite(row.rmse));
      CHECK(std::isfinite(row.r2));
      CHECK(row.n_valid_pixels > 0);
    }
}

TEST_CASE("mlr recovers an exactly linear target") {
  Rng rng(70);
  std::vector<SceneSample> samples;
  for (int k = 0; k < 4; ++k) {
    SceneSample s;
    s.tile = 16;
    const std::size_t plane = s.plane();
    s.s1.resize(6 * plane);
    for (auto& v : s.s1) v = static_cast<float>(rng.normal());
    s.s2_lai_past.resize(2 * plane);
    for (auto& v : s.s2_lai_past) v = static_cast<float>(rng.normal());
    s.masks.assign(3 * plane,
                   static_cast<std::uint8_t>(MaskClass::kLandVegetated));
    s.day_of_year = static_cast<float>(rng.uniform(0.0, 366.0));
    s.lai_target.resize(plane);
    // exactly linear in the documented feature order
    const Seasonality se = seasonality_features(s.day_of_year);
    for (std::size_t i = 0; i < plane; ++i) {
      double y = 0.25;  // bias
      for (int c = 0; c < 6; ++c)
        y += 0.1 * (c + 1) * s.s1[static_cast<std::size_t>(c) * plane + i];
      y += 0.8 * s.s2_lai_past[i];
      y -= 0.3 * s.s2_lai_past[plane + i];
      y += 0.05 * se.sin_component - 0.07 * se.cos_component;
      s.lai_target[i] = static_cast<float>(y);
    }
    samples.push_back(std::move(s));
  }
  const MlrModel m = fit_mlr(samples);
  auto predict = [&m](const SceneSample& s) { return mlr_predict(m, s); };
  const MetricsRow row = evaluate_split(predict, samples, "mlr", "train");
  CHECK(row.r2 == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(row.rmse < 1e-4);
}

TEST_CASE("mlr closed form matches a gradient-descent solver") {
  SceneConfig cfg;
  cfg.seed = 71;
  cfg.tile_size = 16;
  cfg.n_samples = 6;
  cfg.cloud_fraction = 0.2;
  const auto samples = normalized(generate_series(cfg));
  const MlrModel closed = fit_mlr(samples);

  // independent feature extraction following the documented layout
  const int d = kMlrFeatures;
  std::vector<double> xtx(static_cast<std::size_t>(d) * d, 0.0);
  std::vector<double> xty(static_cast<std::size_t>(d), 0.0);
  std::size_t n = 0;
  for (const auto& s : samples) {
    const std::size_t plane = s.plane();
    const Seasonality se = seasonality_features(s.day_of_year);
    for (std::size_t i = 0; i < plane; ++i) {
      if (!mask_class_valid(s.masks[2 * plane + i])) continue;
      std::vector<double> f;
      for (int c = 0; c < 6; ++c)
        f.push_back(s.s1[static_cast<std::size_t>(c) * plane + i]);
      f.push_back(s.s2_lai_past[i]);
      f.push_back(s.s2_lai_past[plane + i]);
      for (int t = 0; t < 3; ++t)
        for (int c = 0; c < 6; ++c)
          f.push_back(s.masks[static_cast<std::size_t>(t) * plane + i] == c
                          ? 1.0
                          : 0.0);
      f.push_back(se.sin_component);
      f.push_back(se.cos_component);
      f.push_back(1.0);
      REQUIRE(static_cast<int>(f.size()) == d);
      for (int r = 0; r < d; ++r) {
        for (int c = 0; c < d; ++c)
          xtx[static_cast<std::size_t>(r) * d + c] += f[static_cast<std::size_t>(r)] * f[static_cast<std::size_t>(c)];
        xty[static_cast<std::size_t>(r)] +=
            f[static_cast<std::size_t>(r)] * s.lai_target[i];
      }
      ++n;
    }
  }
  for (auto& v : xtx) v /= static_cast<double>(n);
  for (auto& v : xty) v /= static_cast<double>(n);

  // gradient descent on the quadratic, step 1/trace
  double trace = 0.0;
  for (int r = 0; r < d; ++r) trace += xtx[static_cast<std::size_t>(r) * d + r];
  const double lr = 1.0 / trace;
  std::vector<double> w(static_cast<std::size_t>(d), 0.0);
  for (int it = 0; it < 200000; ++it) {
    std::vector<double> grad(static_cast<std::size_t>(d), 0.0);
    for (int r = 0; r < d; ++r) {
      double acc = -xty[static_cast<std::size_t>(r)];
      for (int c = 0; c < d; ++c)
        acc += xtx[static_cast<std::size_t>(r) * d + c] * w[static_cast<std::size_t>(c)];
      grad[static_cast<std::size_t>(r)] = acc;
    }
    double gn = 0.0;
    for (int r = 0; r < d; ++r) {
      w[static_cast<std::size_t>(r)] -= lr * grad[static_cast<std::size_t>(r)];
      gn += grad[static_cast<std::size_t>(r)] * grad[static_cast<std::size_t>(r)];
    }
    if (gn < 1e-26) break;
  }
  for (int r = 0; r < d; ++r)
    CHECK(closed.coef[static_cast<std::size_t>(r)] ==
          doctest::Approx(w[static_cast<std::size_t>(r)]).epsilon(1e-5).scale(1.0));
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  cfg.epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), ContractError);
  cfg.epochs = 1;
  cfg.decay_factor = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ContractError);
  cfg.decay_factor = 0.5;
  cfg.lr0 = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ContractError);
}
