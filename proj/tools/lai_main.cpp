// Command-line pipeline: data generation, gradient checking, two-stage
// training, evaluation, the ablation harness and the MLR baseline.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "lai/dataio.hpp"
#include "lai/gradsuite.hpp"
#include "lai/lossmetrics.hpp"
#include "lai/model.hpp"
#include "lai/synthgen.hpp"
#include "lai/train.hpp"
#include "lai/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// stable exit-code contract: 0 ok, 1 numerical/assertion failure, 2 usage,
// 3 missing file, 4 malformed pack/config, 5 checkpoint mismatch
enum ExitCode {
  kOk = 0,
  kNumerical = 1,
  kUsage = 2,
  kMissingFile = 3,
  kFormat = 4,
  kCheckpoint = 5,
};

void require_exists(const fs::path& p, const char* what) {
  if (!fs::exists(p))
    throw lai::FileNotFoundError(std::string(what) + " not found: " +
                                 p.string());
}

json train_config_json(const lai::TrainConfig& c) {
  return json{{"epochs", c.epochs},
              {"lr0", c.lr0},
              {"decay_factor", c.decay_factor},
              {"n_decays", c.n_decays},
              {"batch_size", c.batch_size},
              {"alpha", c.weights.alpha},
              {"beta", c.weights.beta},
              {"seed", c.seed},
              {"adam_beta1", c.adam_beta1},
              {"adam_beta2", c.adam_beta2},
              {"adam_eps", c.adam_eps}};
}

lai::TrainConfig load_train_config(const fs::path& file) {
  require_exists(file, "config file");
  std::ifstream in(file);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw lai::ConfigParseError("config parse error in " + file.string() +
                                ": " + e.what());
  }
  lai::TrainConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "epochs") c.epochs = value.get<int>();
      else if (key == "lr0") c.lr0 = value.get<double>();
      else if (key == "decay_factor") c.decay_factor = value.get<double>();
      else if (key == "n_decays") c.n_decays = value.get<int>();
      else if (key == "batch_size") c.batch_size = value.get<int>();
      else if (key == "alpha") c.weights.alpha = value.get<double>();
      else if (key == "beta") c.weights.beta = value.get<double>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "adam_beta1") c.adam_beta1 = value.get<double>();
      else if (key == "adam_beta2") c.adam_beta2 = value.get<double>();
      else if (key == "adam_eps") c.adam_eps = value.get<double>();
      else
        throw lai::ConfigParseError("unknown config key '" + key + "' in " +
                                    file.string());
    }
  } catch (const json::exception& e) {
    throw lai::ConfigParseError("config value error in " + file.string() +
                                ": " + e.what());
  }
  return c;
}

void write_run_manifest(const fs::path& path, const std::string& command,
                        const json& config,
                        const std::vector<std::string>& inputs,
                        const std::vector<std::string>& outputs) {
  json m;
  m["tool_version"] = lai::kToolVersion;
  m["command"] = command;
  m["config"] = config;
  m["inputs"] = inputs;
  m["outputs"] = outputs;
  std::ofstream out(path, std::ios::trunc);
  if (!out)
    throw lai::Error("cannot write run manifest to " + path.string());
  out << m.dump(2) << "\n";
}

// run-manifest path for a file artifact (reports) vs a directory artifact
fs::path manifest_sibling(const fs::path& artifact) {
  fs::path p = artifact;
  p += ".manifest.json";
  return p;
}

std::vector<lai::SceneSample> load_split(const fs::path& data_dir,
                                         const std::string& split) {
  const fs::path dir = data_dir / split;
  require_exists(dir, ("data split '" + split + "'").c_str());
  return lai::load_tilepack(dir);
}

struct TrainFlags {
  std::string config_file;
  std::optional<int> epochs;
  std::optional<int> batch_size;
  std::optional<double> lr0;
  std::optional<double> alpha;
  std::optional<double> beta;
  std::optional<std::uint64_t> seed;

  lai::TrainConfig resolve() const {
    lai::TrainConfig c;
    if (!config_file.empty()) c = load_train_config(config_file);
    if (epochs) c.epochs = *epochs;
    if (batch_size) c.batch_size = *batch_size;
    if (lr0) c.lr0 = *lr0;
    if (alpha) c.weights.alpha = *alpha;
    if (beta) c.weights.beta = *beta;
    if (seed) c.seed = *seed;
    try {
      c.validate();
    } catch (const lai::ContractError& e) {
      throw CLI::ValidationError("config", e.what());
    }
    return c;
  }

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_file,
                    "JSON config file mirroring the training fields");
    cmd->add_option("--epochs", epochs, "override: training epochs");
    cmd->add_option("--batch-size", batch_size, "override: batch size");
    cmd->add_option("--lr0", lr0, "override: initial learning rate");
    cmd->add_option("--alpha", alpha, "override: enc1 loss weight");
    cmd->add_option("--beta", beta, "override: enc2 loss weight");
    cmd->add_option("--seed", seed, "override: training seed");
  }
};

// appends train.log lines; epoch summaries go to stdout from the caller
class StepLogger {
 public:
  explicit StepLogger(const fs::path& path) : out_(path, std::ios::trunc) {
    if (!out_) throw lai::Error("cannot open log file " + path.string());
  }
  lai::StepCallback callback() {
    return [this](const lai::StepRecord& r) { out_ << format_step(r) << "\n"; };
  }

 private:
  std::ofstream out_;
};

int cmd_gen_data(std::uint64_t seed, int tile_size, int n_train, int n_eval,
                 double cloud_fraction, const fs::path& out_dir) {
  lai::SceneConfig base;
  base.tile_size = tile_size;
  base.cloud_fraction = cloud_fraction;

  auto pack_cfg = [&](std::uint64_t salt) {
    lai::SceneConfig c = base;
    c.seed = lai::derive_stream(seed, salt, 0);
    return c;
  };

  // train pack
  lai::SceneConfig train_cfg = pack_cfg(1);
  train_cfg.n_samples = n_train;
  const auto train = lai::generate_series(train_cfg);

  // eval candidates stream, bucketed by measured past-frame cloudiness
  lai::SceneConfig eval_cfg = pack_cfg(2);
  std::vector<lai::SceneSample> non_cloudy, cloudy;
  const std::uint64_t cap = 60ull * static_cast<std::uint64_t>(n_eval);
  for (std::uint64_t i = 0;
       i < cap && (non_cloudy.size() < static_cast<std::size_t>(n_eval) ||
                   cloudy.size() < static_cast<std::size_t>(n_eval));
       ++i) {
    lai::SceneSample s = lai::generate_sample(eval_cfg, i);
    const double f = lai::past_cloud_fraction(s);
    if (f < lai::kNonCloudyMaxFraction &&
        non_cloudy.size() < static_cast<std::size_t>(n_eval))
      non_cloudy.push_back(std::move(s));
    else if (f > lai::kCloudyMinFraction &&
             cloudy.size() < static_cast<std::size_t>(n_eval))
      cloudy.push_back(std::move(s));
  }
  if (non_cloudy.size() < static_cast<std::size_t>(n_eval) ||
      cloudy.size() < static_cast<std::size_t>(n_eval))
    throw lai::DegenerateDatasetError(
        "could not fill the cloudiness eval splits; raise --cloud-fraction "
        "or --n-eval");

  // unique areas: disjoint generator stream stands in for distinct locations
  lai::SceneConfig unique_cfg = pack_cfg(4);
  unique_cfg.n_samples = n_eval;
  const auto unique_areas = lai::generate_series(unique_cfg);

  lai::save_tilepack(train, "train", out_dir / "train");
  lai::save_tilepack(non_cloudy, "non_cloudy", out_dir / "non_cloudy");
  lai::save_tilepack(cloudy, "cloudy", out_dir / "cloudy");
  lai::save_tilepack(unique_areas, "unique_areas", out_dir / "unique_areas");

  write_run_manifest(out_dir / "run_manifest.json", "gen-data",
                     json{{"seed", seed},
                          {"tile_size", tile_size},
                          {"n_train", n_train},
                          {"n_eval", n_eval},
                          {"cloud_fraction", cloud_fraction},
                          {"s1_noise_std", base.s1_noise_std},
                          {"temporal_drift", base.temporal_drift}},
                     {}, {out_dir.string()});
  std::cout << "wrote " << train.size() << " train, " << non_cloudy.size()
            << " non_cloudy, " << cloudy.size() << " cloudy, "
            << unique_areas.size() << " unique_areas samples to " << out_dir
            << "\n";
  return kOk;
}

int cmd_gradcheck(bool corrupt_conv2d) {
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 1; s <= 10; ++s) seeds.push_back(s);
  const auto results = lai::run_gradcheck_suite(seeds, corrupt_conv2d);
  bool all_ok = true;
  for (const auto& r : results) {
    const bool ok = r.max_rel_err < lai::kGradCheckTol;
    all_ok = all_ok && ok;
    std::printf("op=%s max_rel_err=%.3e %s\n", r.op.c_str(), r.max_rel_err,
                ok ? "PASS" : "FAIL");
  }
  if (!all_ok) {
    for (const auto& r : results)
      if (r.max_rel_err >= lai::kGradCheckTol)
        std::fprintf(stderr, "gradient check failed for %s\n", r.op.c_str());
  }
  return all_ok ? kOk : kNumerical;
}

int cmd_pretrain(int encoder, const fs::path& data_dir, const TrainFlags& tf,
                 const fs::path& out_ckpt) {
  const lai::TrainConfig cfg = tf.resolve();
  require_exists(data_dir, "data directory");
  const auto train_raw = load_split(data_dir, "train");
  const lai::NormStats stats = lai::compute_norm_stats(train_raw);
  const auto train = lai::normalize(train_raw, stats);

  std::optional<std::vector<lai::SceneSample>> val;
  if (fs::exists(data_dir / "non_cloudy"))
    val = lai::normalize(load_split(data_dir, "non_cloudy"), stats);

  const lai::EncoderId which =
      encoder == 1 ? lai::EncoderId::kEnc1 : lai::EncoderId::kEnc2;
  const lai::ModelConfig mcfg;

  fs::create_directories(out_ckpt);
  StepLogger logger(out_ckpt / "train.log");
  lai::EncoderTrainResult res =
      lai::pretrain_encoder(which, mcfg, train, cfg, {},
                            val ? &*val : nullptr, logger.callback());
  for (std::size_t e = 0; e < res.epoch_loss.size(); ++e)
    std::printf("epoch=%zu mean_loss=%.6g\n", e, res.epoch_loss[e]);
  if (res.best_val_rmse)
    std::printf("best_val_rmse=%.6g\n", *res.best_val_rmse);

  lai::CheckpointMeta meta;
  meta.model_kind = encoder == 1 ? "encoder1" : "encoder2";
  meta.cfg = mcfg;
  meta.stats = stats;
  lai::save_checkpoint(out_ckpt, meta,
                       named_params(res.encoder, lai::encoder_prefix(which)));
  write_run_manifest(out_ckpt / "run_manifest.json", "pretrain",
                     train_config_json(cfg), {data_dir.string()},
                     {out_ckpt.string()});
  return kOk;
}

int cmd_train(const fs::path& enc1_ckpt, const fs::path& enc2_ckpt,
              const fs::path& data_dir, const TrainFlags& tf,
              const fs::path& out_ckpt) {
  const lai::TrainConfig cfg = tf.resolve();
  require_exists(enc1_ckpt, "enc1 checkpoint");
  require_exists(enc2_ckpt, "enc2 checkpoint");
  require_exists(data_dir, "data directory");

  const lai::CheckpointMeta meta1 = lai::read_checkpoint_meta(enc1_ckpt);
  const lai::CheckpointMeta meta2 = lai::read_checkpoint_meta(enc2_ckpt);
  if (meta1.model_kind != "encoder1")
    throw lai::CheckpointMismatchError("--enc1 checkpoint has kind '" +
                                       meta1.model_kind + "'");
  if (meta2.model_kind != "encoder2")
    throw lai::CheckpointMismatchError("--enc2 checkpoint has kind '" +
                                       meta2.model_kind + "'");
  if (meta1.stats.s1_mean != meta2.stats.s1_mean ||
      meta1.stats.s1_std != meta2.stats.s1_std ||
      meta1.stats.lai_mean != meta2.stats.lai_mean ||
      meta1.stats.lai_std != meta2.stats.lai_std)
    throw lai::CheckpointMismatchError(
        "encoder checkpoints carry different normalization stats");

  const lai::ModelConfig mcfg = meta1.cfg;
  lai::Rng rng1(1), rng2(2);
  lai::EncoderParams<float> enc1 =
      lai::make_encoder<float>(mcfg, lai::EncoderId::kEnc1, rng1);
  lai::EncoderParams<float> enc2 =
      lai::make_encoder<float>(mcfg, lai::EncoderId::kEnc2, rng2);
  lai::load_checkpoint_params(enc1_ckpt, named_params(enc1, "enc1"));
  lai::load_checkpoint_params(enc2_ckpt, named_params(enc2, "enc2"));

  const auto train = lai::normalize(load_split(data_dir, "train"), meta1.stats);
  std::optional<std::vector<lai::SceneSample>> val;
  if (fs::exists(data_dir / "non_cloudy"))
    val = lai::normalize(load_split(data_dir, "non_cloudy"), meta1.stats);

  fs::create_directories(out_ckpt);
  StepLogger logger(out_ckpt / "train.log");
  lai::ModelTrainResult res =
      lai::finetune_full(enc1, enc2, mcfg, train, cfg, {},
                         val ? &*val : nullptr, logger.callback());
  for (std::size_t e = 0; e < res.epoch_loss.size(); ++e)
    std::printf("epoch=%zu mean_loss=%.6g\n", e, res.epoch_loss[e]);
  if (res.best_val_rmse)
    std::printf("best_val_rmse=%.6g\n", *res.best_val_rmse);

  lai::CheckpointMeta meta;
  meta.model_kind = "full";
  meta.cfg = mcfg;
  meta.stats = meta1.stats;
  lai::save_checkpoint(out_ckpt, meta, named_params(res.model));
  write_run_manifest(out_ckpt / "run_manifest.json", "train",
                     train_config_json(cfg),
                     {enc1_ckpt.string(), enc2_ckpt.string(), data_dir.string()},
                     {out_ckpt.string()});
  return kOk;
}

int cmd_eval(const fs::path& ckpt, const fs::path& data_dir,
             const std::string& split) {
  require_exists(ckpt, "checkpoint");
  require_exists(data_dir, "data directory");
  const lai::CheckpointMeta meta = lai::read_checkpoint_meta(ckpt);
  const auto samples =
      lai::normalize(load_split(data_dir, split), meta.stats);

  lai::MetricsRow row;
  // keep the parameter holders alive through evaluation
  lai::ModelParams<float> model;
  lai::EncoderParams<float> enc;
  if (meta.model_kind == "full") {
    model = lai::make_model<float>(meta.cfg, 0);
    lai::load_checkpoint_params(ckpt, named_params(model));
    row = lai::evaluate_split(lai::model_predictor(model), samples, "full",
                              split);
  } else if (meta.model_kind == "encoder1" || meta.model_kind == "encoder2") {
    const lai::EncoderId which = meta.model_kind == "encoder1"
                                     ? lai::EncoderId::kEnc1
                                     : lai::EncoderId::kEnc2;
    lai::Rng rng(1);
    enc = lai::make_encoder<float>(meta.cfg, which, rng);
    lai::load_checkpoint_params(ckpt,
                                named_params(enc, lai::encoder_prefix(which)));
    row = lai::evaluate_split(lai::encoder_predictor(enc, which, {}), samples,
                              meta.model_kind, split);
  } else {
    throw lai::CheckpointMismatchError("unknown model kind '" +
                                       meta.model_kind + "'");
  }
  std::printf("variant=%s split=%s n_valid_pixels=%zu\n", row.variant.c_str(),
              row.split.c_str(), row.n_valid_pixels);
  std::printf("rmse=%.10g r2=%.10g\n", row.rmse, row.r2);
  return kOk;
}

lai::AblationData load_ablation_data(const fs::path& data_dir) {
  lai::AblationData data;
  data.train = load_split(data_dir, "train");
  data.non_cloudy = load_split(data_dir, "non_cloudy");
  data.cloudy = load_split(data_dir, "cloudy");
  data.unique_areas = load_split(data_dir, "unique_areas");
  return data;
}

int cmd_ablate(const fs::path& data_dir, const TrainFlags& tf,
               const fs::path& out_report) {
  const lai::TrainConfig cfg = tf.resolve();
  require_exists(data_dir, "data directory");
  const lai::AblationData data = load_ablation_data(data_dir);
  const lai::MetricsReport report =
      lai::run_ablations(data, lai::ModelConfig{}, cfg);
  if (out_report.has_parent_path())
    fs::create_directories(out_report.parent_path());
  lai::write_metrics_csv(report, out_report);
  write_run_manifest(manifest_sibling(out_report), "ablate",
                     train_config_json(cfg), {data_dir.string()},
                     {out_report.string()});
  std::cout << lai::metrics_csv(report);
  return kOk;
}

int cmd_baseline(const fs::path& data_dir, const fs::path& out_report) {
  require_exists(data_dir, "data directory");
  const lai::AblationData data = load_ablation_data(data_dir);
  const lai::MetricsReport report = lai::mlr_baseline(data);
  if (out_report.has_parent_path())
    fs::create_directories(out_report.parent_path());
  lai::write_metrics_csv(report, out_report);
  write_run_manifest(manifest_sibling(out_report), "baseline", json::object(),
                     {data_dir.string()}, {out_report.string()});
  std::cout << lai::metrics_csv(report);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pixel-wise LAI regression from fused SAR/optical time series"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate synthetic tile packs");
  std::uint64_t gen_seed = 0;
  int gen_tile = 32, gen_train = 200, gen_eval = 24;
  double gen_cloud = 0.3;
  std::string gen_out;
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--tile-size", gen_tile, "tile side length")
      ->check(CLI::PositiveNumber);
  gen->add_option("--n-train", gen_train, "training samples")
      ->check(CLI::NonNegativeNumber);
  gen->add_option("--n-eval", gen_eval, "samples per eval split")
      ->check(CLI::PositiveNumber);
  gen->add_option("--cloud-fraction", gen_cloud,
                  "expected cloud coverage of past frames")
      ->check(CLI::Range(0.0, 1.0));
  gen->add_option("--out", gen_out, "output directory")->required();

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck",
                                "finite-difference check of every op");
  bool gc_corrupt = false;
  gc->add_flag("--corrupt-conv2d", gc_corrupt)->group("");  // test fixture

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "train one encoder alone");
  int pre_encoder = 0;
  std::string pre_data, pre_out;
  TrainFlags pre_tf;
  pre->add_option("--encoder", pre_encoder, "1 (S1 branch) or 2 (past LAI)")
      ->required()
      ->check(CLI::IsMember({1, 2}));
  pre->add_option("--data", pre_data, "data directory")->required();
  pre->add_option("--out", pre_out, "checkpoint directory")->required();
  pre_tf.attach(pre);

  // train
  auto* tr = app.add_subcommand(
      "train", "fine-tune the full model from pretrained encoders");
  std::string tr_enc1, tr_enc2, tr_data, tr_out;
  TrainFlags tr_tf;
  tr->add_option("--enc1", tr_enc1, "encoder-1 checkpoint")->required();
  tr->add_option("--enc2", tr_enc2, "encoder-2 checkpoint")->required();
  tr->add_option("--data", tr_data, "data directory")->required();
  tr->add_option("--out", tr_out, "checkpoint directory")->required();
  tr_tf.attach(tr);

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on one split");
  std::string ev_ckpt, ev_data, ev_split;
  ev->add_option("--ckpt", ev_ckpt, "checkpoint directory")->required();
  ev->add_option("--data", ev_data, "data directory")->required();
  ev->add_option("--split", ev_split, "split name")
      ->required()
      ->check(CLI::IsMember(
          {"train", "non_cloudy", "cloudy", "unique_areas"}));

  // ablate
  auto* ab = app.add_subcommand("ablate", "train and score the six variants");
  std::string ab_data, ab_out;
  TrainFlags ab_tf;
  ab->add_option("--data", ab_data, "data directory")->required();
  ab->add_option("--out", ab_out, "report CSV path")->required();
  ab_tf.attach(ab);

  // baseline
  auto* bl = app.add_subcommand("baseline", "per-pixel MLR baseline");
  std::string bl_data, bl_out;
  bl->add_option("--data", bl_data, "data directory")->required();
  bl->add_option("--out", bl_out, "report CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kUsage;
  }

  try {
    if (app.got_subcommand(gen))
      return cmd_gen_data(gen_seed, gen_tile, gen_train, gen_eval, gen_cloud,
                          gen_out);
    if (app.got_subcommand(gc)) return cmd_gradcheck(gc_corrupt);
    if (app.got_subcommand(pre))
      return cmd_pretrain(pre_encoder, pre_data, pre_tf, pre_out);
    if (app.got_subcommand(tr))
      return cmd_train(tr_enc1, tr_enc2, tr_data, tr_tf, tr_out);
    if (app.got_subcommand(ev)) return cmd_eval(ev_ckpt, ev_data, ev_split);
    if (app.got_subcommand(ab)) return cmd_ablate(ab_data, ab_tf, ab_out);
    if (app.got_subcommand(bl)) return cmd_baseline(bl_data, bl_out);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const lai::FileNotFoundError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kMissingFile;
  } catch (const lai::CheckpointMismatchError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kCheckpoint;
  } catch (const lai::PackError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFormat;
  } catch (const lai::ConfigParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFormat;
  } catch (const lai::DataCorruptionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFormat;
  } catch (const lai::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumerical;
  }
  return kUsage;
}
