#include "lai/gradcheck.hpp"

#include "doctest.h"
#include "lai/gradsuite.hpp"
#include "lai/lossmetrics.hpp"
#include "lai/ops.hpp"
#include "lai/rng.hpp"
#include "oracles.hpp"

using namespace lai;

TEST_CASE("grad_check on a linear function is essentially exact") {
  Rng rng(1);
  Tensor<double> x = oracle::randn<double>(rng, {2, 3});
  auto f = [](const std::vector<Tensor<double>>& in) { return sum(in[0]); };
  CHECK(grad_check(f, {x}, 1e-5).max_rel_err < 1e-10);
}

TEST_CASE("grad_check sum of cubes: analytic 12 at x=2") {
  Tensor<double> x = Tensor<double>::from_data({1}, {2.0});
  auto f = [](const std::vector<Tensor<double>>& in) {
    return sum(mul(mul(in[0], in[0]), in[0]));
  };

  // analytic derivative via the tape
  Tape<double>::current().clear();
  x.set_requires_grad(true);
  backward(f({x}));
  CHECK(x.grad()[0] == doctest::Approx(12.0).epsilon(1e-12));
  Tape<double>::current().clear();
  x.zero_grad();

  CHECK(grad_check(f, {x}, 1e-5).max_rel_err < 1e-6);
}

TEST_CASE("grad_check through conv-relu-conv masked MSE stays under 1e-4") {
  Rng rng(17);
  Tensor<double> x = oracle::randn<double>(rng, {1, 2, 8, 8});
  Tensor<double> w1 = oracle::randn<double>(rng, {3, 2, 3, 3}, 0.5);
  Tensor<double> b1 = oracle::randn<double>(rng, {3}, 0.2);
  Tensor<double> w2 = oracle::randn<double>(rng, {1, 3, 3, 3}, 0.5);
  Tensor<double> b2 = oracle::randn<double>(rng, {1}, 0.2);
  Tensor<double> gt = oracle::randn<double>(rng, {1, 1, 8, 8});
  std::vector<double> v(64);
  for (auto& m : v) m = rng.uniform() < 0.75 ? 1.0 : 0.0;
  v[5] = 1.0;
  Tensor<double> valid = Tensor<double>::from_data({1, 1, 8, 8}, std::move(v));

  auto f = [gt, valid](const std::vector<Tensor<double>>& in) {
    Tensor<double> h = relu(conv2d(in[0], in[1], in[2], 1, 1));
    Tensor<double> pred = conv2d(h, in[3], in[4], 1, 1);
    return masked_mse(pred, gt, valid);
  };
  CHECK(grad_check(f, {x, w1, b1, w2, b2}, 1e-5).max_rel_err < 1e-4);
}

TEST_CASE("full op suite passes on ten seeds") {
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 1; s <= 10; ++s) seeds.push_back(s);
  const auto results = run_gradcheck_suite(seeds);
  REQUIRE(results.size() == 13);
  for (const auto& r : results) {
    INFO(r.op);
    CHECK(r.max_rel_err < kGradCheckTol);
  }
  CHECK(gradcheck_suite_passed(results));
}

TEST_CASE("negative control: a corrupted conv backward is caught") {
  const auto results = run_gradcheck_suite({1}, /*corrupt_conv2d=*/true);
  bool conv_failed = false;
  for (const auto& r : results)
    if (r.op == "conv2d") conv_failed = r.max_rel_err >= kGradCheckTol;
  CHECK(conv_failed);
  CHECK_FALSE(gradcheck_suite_passed(results));
}
