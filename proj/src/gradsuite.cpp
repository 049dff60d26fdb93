#include "lai/gradsuite.hpp"

#include <algorithm>
#include <cmath>

#include "lai/gradcheck.hpp"
#include "lai/lossmetrics.hpp"
#include "lai/model.hpp"
#include "lai/ops.hpp"
#include "lai/rng.hpp"
#include "lai/synthgen.hpp"

namespace lai {
namespace {

Tensor<double> randn(Rng& rng, Shape shape, double std = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.normal(0.0, std);
  return Tensor<double>::from_data(std::move(shape), std::move(v));
}

// shifts every element away from zero so relu stays smooth under eps jitter
Tensor<double> randn_off_zero(Rng& rng, Shape shape, double margin = 0.3) {
  Tensor<double> t = randn(rng, std::move(shape));
  for (auto& v : t.data()) v += v >= 0.0 ? margin : -margin;
  return t;
}

// quadratic wrap so linear ops still exercise the chain rule
Tensor<double> square_sum(const Tensor<double>& y) { return sum(mul(y, y)); }

// Negative-control fixture: forward is the identity, backward inflates the
// upstream gradient, so any check through it must fail.
Tensor<double> identity_with_broken_grad(const Tensor<double>& x) {
  Tensor<double> y = Tensor<double>::from_data(
      x.shape(), std::vector<double>(x.data().begin(), x.data().end()));
  y.set_requires_grad(true);
  auto xn = x.node(), yn = y.node();
  Tape<double>::current().record(
      {yn,
       {xn},
       [xn](const std::vector<double>& dy, Adjoints<double>& adj) {
         double* dx = adj.at(xn).data();
         for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += 1.02 * dy[i];
       }});
  return y;
}

double check_conv2d(std::uint64_t seed, bool corrupt) {
  Rng rng(mix64(seed));
  Tensor<double> x = randn(rng, {1, 2, 6, 6});
  Tensor<double> w = randn(rng, {3, 2, 3, 3}, 0.5);
  Tensor<double> b = randn(rng, {3}, 0.5);
  auto f = [corrupt](const std::vector<Tensor<double>>& in) {
    Tensor<double> y = conv2d(in[0], in[1], in[2], 1, 1);
    if (corrupt) y = identity_with_broken_grad(y);
    return square_sum(y);
  };
  double err = grad_check(f, {x, w, b}, 1e-5).max_rel_err;
  // strided geometry
  Tensor<double> xs = randn(rng, {2, 1, 7, 7});
  Tensor<double> ws = randn(rng, {2, 1, 3, 3}, 0.5);
  Tensor<double> bs = randn(rng, {2}, 0.5);
  auto fs = [](const std::vector<Tensor<double>>& in) {
    return square_sum(conv2d(in[0], in[1], in[2], 2, 0));
  };
  return std::max(err, grad_check(fs, {xs, ws, bs}, 1e-5).max_rel_err);
}

double check_max_pool2d(std::uint64_t seed) {
  Rng rng(mix64(seed));
  // spread values so windows have no near-ties under the eps jitter
  Tensor<double> x = randn(rng, {1, 2, 4, 4}, 3.0);
  auto f = [](const std::vector<Tensor<double>>& in) {
    return square_sum(max_pool2d(in[0], 2));
  };
  return grad_check(f, {x}, 1e-5).max_rel_err;
}

double check_upsample(std::uint64_t seed) {
  Rng rng(mix64(seed));
  Tensor<double> x = randn(rng, {1, 3, 3, 3});
  auto f = [](const std::vector<Tensor<double>>& in) {
    return square_sum(upsample_nearest2x(in[0]));
  };
  return grad_check(f, {x}, 1e-5).max_rel_err;
}

double check_relu(std::uint64_t seed) {
  Rng rng(mix64(seed));
  Tensor<double> x = randn_off_zero(rng, {2, 3, 4, 4});
  auto f = [](const std::vector<Tensor<double>>& in) {
    return square_sum(relu(in[0]));
  };
  return grad_check(f, {x}, 1e-5).max_rel_err;
}

double check_linear(std::uint64_t seed) {
  Rng rng(mix64(seed));
  Tensor<double> x = randn(rng, {3, 5});
  Tensor<double> w = randn(rng, {4, 5}, 0.5);
  Tensor<double> b = randn(rng, {4}, 0.5);
  auto f = [](const std::vector<Tensor<double>>& in) {
    return square_sum(linear(in[0], in[1], in[2]));
  };
  return grad_check(f, {x, w, b}, 1e-5).max_rel_err;
}

double check_concat(std::uint64_t seed) {
  Rng rng(mix64(seed));
  Tensor<double> a = randn(rng, {2, 2, 3, 3});
  Tensor<double> b = randn(rng, {2, 1, 3, 3});
  auto f = [](const std::vector<Tensor<double>>& in) {
    return square_sum(concat_channels<double>({in[0], in[1]}));
  };
  return grad_check(f, {a, b}, 1e-5).max_rel_err;
}

double check_broadcast(std::uint64_t seed) {
  Rng rng(mix64(seed));
  Tensor<double> v = randn(rng, {2, 3});
  auto f = [](const std::vector<Tensor<double>>& in) {
    return square_sum(broadcast_spatial(in[0], 3, 4));
  };
  return grad_check(f, {v}, 1e-5).max_rel_err;
}

double check_add(std::uint64_t seed) {
  Rng rng(mix64(seed));
  Tensor<double> a = randn(rng, {2, 7});
  Tensor<double> b = randn(rng, {2, 7});
  auto f = [](const std::vector<Tensor<double>>& in) {
    return square_sum(add(in[0], in[1]));
  };
  return grad_check(f, {a, b}, 1e-5).max_rel_err;
}

double check_mul(std::uint64_t seed) {
  Rng rng(mix64(seed));
  Tensor<double> a = randn(rng, {3, 5});
  Tensor<double> b = randn(rng, {3, 5});
  auto f = [](const std::vector<Tensor<double>>& in) {
    return sum(mul(in[0], in[1]));
  };
  return grad_check(f, {a, b}, 1e-5).max_rel_err;
}

double check_scale(std::uint64_t seed) {
  Rng rng(mix64(seed));
  Tensor<double> x = randn(rng, {4, 4});
  auto f = [](const std::vector<Tensor<double>>& in) {
    return square_sum(scale(in[0], 1.7));
  };
  return grad_check(f, {x}, 1e-5).max_rel_err;
}

double check_sum(std::uint64_t seed) {
  Rng rng(mix64(seed));
  Tensor<double> x = randn(rng, {3, 6});
  auto f = [](const std::vector<Tensor<double>>& in) {
    return square_sum(sum(in[0]));
  };
  return grad_check(f, {x}, 1e-5).max_rel_err;
}

double check_masked_mse(std::uint64_t seed) {
  Rng rng(mix64(seed));
  Tensor<double> pred = randn(rng, {1, 1, 4, 4});
  Tensor<double> gt = randn(rng, {1, 1, 4, 4});
  std::vector<double> v(16, 0.0);
  for (auto& x : v) x = rng.uniform() < 0.7 ? 1.0 : 0.0;
  v[0] = 1.0;  // at least one valid pixel
  Tensor<double> valid = Tensor<double>::from_data({1, 1, 4, 4}, std::move(v));
  auto f = [valid](const std::vector<Tensor<double>>& in) {
    return masked_mse(in[0], in[1], valid);
  };
  return grad_check(f, {pred, gt}, 1e-5).max_rel_err;
}

// masked combined loss through a depth-1 dual-encoder model, checked against
// every parameter plus both primary input maps
double check_model_loss(std::uint64_t seed) {
  const ModelConfig micro{.enc_depth = 1,
                          .enc_base = 4,
                          .dec_depth = 1,
                          .dec_base = 4,
                          .feature_channels = 4,
                          .mask_embed = 4,
                          .season_hidden = 8};
  ModelParams<double> model = make_model<double>(micro, seed);

  SceneConfig scfg;
  scfg.seed = seed;
  scfg.tile_size = 8;
  scfg.n_samples = 1;
  scfg.cloud_fraction = 0.3;
  scfg.s1_noise_std = 0.1;
  scfg.temporal_drift = 0.1;
  const SceneSample sample = generate_sample(scfg, 7);
  const int idx[1] = {0};
  Batch<double> batch = assemble_batch<double>(std::span(&sample, 1), idx, {});

  const LossWeights w{0.1, 0.15};
  auto f = [&model, &batch, w](const std::vector<Tensor<double>>&) {
    ModelOut<double> out = full_forward(model, batch);
    return combined_loss(batch.target, out.dec, out.enc1_head, out.enc2_head,
                         batch.valid, w);
  };
  std::vector<Tensor<double>> inputs;
  for (auto& [name, t] : named_params(model)) inputs.push_back(t);
  inputs.push_back(batch.s1);
  inputs.push_back(batch.s2);
  return grad_check(f, inputs, 1e-6).max_rel_err;
}

}  // namespace

std::vector<OpCheckResult> run_gradcheck_suite(
    const std::vector<std::uint64_t>& seeds, bool corrupt_conv2d) {
  struct Case {
    const char* op;
    double (*fn)(std::uint64_t);
  };
  std::vector<OpCheckResult> results;
  results.push_back({"conv2d", 0.0});
  for (std::uint64_t s : seeds)
    results.back().max_rel_err =
        std::max(results.back().max_rel_err, check_conv2d(s, corrupt_conv2d));

  const Case cases[] = {
      {"max_pool2d", check_max_pool2d},
      {"upsample_nearest2x", check_upsample},
      {"relu", check_relu},
      {"linear", check_linear},
      {"concat_channels", check_concat},
      {"broadcast_spatial", check_broadcast},
      {"add", check_add},
      {"mul", check_mul},
      {"scale", check_scale},
      {"sum", check_sum},
      {"masked_mse", check_masked_mse},
      {"model_combined_loss", check_model_loss},
  };
  for (const Case& c : cases) {
    OpCheckResult r{c.op, 0.0};
    for (std::uint64_t s : seeds)
      r.max_rel_err = std::max(r.max_rel_err, c.fn(s));
    results.push_back(std::move(r));
  }
  return results;
}

bool gradcheck_suite_passed(const std::vector<OpCheckResult>& results,
                            double tol) {
  return std::all_of(results.begin(), results.end(),
                     [tol](const OpCheckResult& r) { return r.max_rel_err < tol; });
}

}  // namespace lai
