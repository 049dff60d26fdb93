#include "lai/ops.hpp"

#include <vector>

#include "doctest.h"
#include "lai/rng.hpp"
#include "oracles.hpp"

using namespace lai;

namespace {

template <typename T>
void check_equal(const Tensor<T>& a, const Tensor<T>& b, double tol = 0.0) {
  REQUIRE(a.shape() == b.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) {
    if (tol == 0.0)
      CHECK(a.data()[i] == b.data()[i]);
    else
      CHECK(a.data()[i] == doctest::Approx(b.data()[i]).epsilon(tol));
  }
}

}  // namespace

TEST_CASE("conv2d matches the hand-derived 2x2 case") {
  Tensor<float> x = Tensor<float>::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
  Tensor<float> w = Tensor<float>::from_data({1, 1, 2, 2}, {1, 0, 0, 1});
  Tensor<float> b = Tensor<float>::zeros({1});
  Tensor<float> y = conv2d(x, w, b, 1, 0);
  CHECK(y.shape() == Shape{1, 1, 1, 1});
  CHECK(y.item() == 5.0f);
  check_equal(y, oracle::conv2d(x, w, b, 1, 0));
}

TEST_CASE("conv2d with a 1x1 delta kernel is the identity, exactly") {
  Rng rng(11);
  Tensor<float> x = oracle::randn<float>(rng, {2, 3, 5, 7});
  Tensor<float> w = Tensor<float>::zeros({3, 3, 1, 1});
  for (int c = 0; c < 3; ++c) w.data()[static_cast<std::size_t>(c) * 3 + c] = 1.0f;
  Tensor<float> b = Tensor<float>::zeros({3});
  Tensor<float> y = conv2d(x, w, b, 1, 0);
  check_equal(y, x);
}

TEST_CASE("conv2d of a zero input is the bias everywhere") {
  Tensor<float> x = Tensor<float>::zeros({1, 2, 4, 4});
  Rng rng(3);
  Tensor<float> w = oracle::randn<float>(rng, {2, 2, 3, 3});
  Tensor<float> b = Tensor<float>::from_data({2}, {0.5f, -1.25f});
  Tensor<float> y = conv2d(x, w, b, 1, 1);
  for (int co = 0; co < 2; ++co)
    for (int h = 0; h < 4; ++h)
      for (int ww = 0; ww < 4; ++ww)
        CHECK(y.at(0, co, h, ww) == b.data()[static_cast<std::size_t>(co)]);
}

TEST_CASE("conv2d agrees with the nested-loop oracle over random geometries") {
  Rng rng(42);
  const struct {
    int n, cin, h, w, cout, k, stride, pad;
  } cases[] = {
      {2, 3, 8, 8, 4, 3, 1, 1}, {1, 1, 5, 9, 2, 3, 2, 0},
      {3, 2, 6, 6, 1, 1, 1, 0}, {1, 4, 7, 7, 3, 5, 1, 2},
      {2, 2, 8, 6, 2, 2, 2, 1},
  };
  for (const auto& c : cases) {
    Tensor<double> x = oracle::randn<double>(rng, {c.n, c.cin, c.h, c.w});
    Tensor<double> w = oracle::randn<double>(rng, {c.cout, c.cin, c.k, c.k});
    Tensor<double> b = oracle::randn<double>(rng, {c.cout});
    check_equal(conv2d(x, w, b, c.stride, c.pad),
                oracle::conv2d(x, w, b, c.stride, c.pad), 1e-12);
  }
}

TEST_CASE("conv2d rejects bad geometry and mismatched channels") {
  Tensor<float> x = Tensor<float>::zeros({1, 2, 4, 4});
  Tensor<float> w = Tensor<float>::zeros({1, 3, 3, 3});
  Tensor<float> b = Tensor<float>::zeros({1});
  CHECK_THROWS_AS(conv2d(x, w, b, 1, 0), ContractError);
  Tensor<float> w_big = Tensor<float>::zeros({1, 2, 7, 7});
  CHECK_THROWS_AS(conv2d(x, w_big, b, 1, 0), GeometryError);
  Tensor<float> w_ok = Tensor<float>::zeros({1, 2, 3, 3});
  CHECK_THROWS_AS(conv2d(x, w_ok, b, 0, 0), ContractError);
}

TEST_CASE("conv2d is deterministic across repeated runs") {
  Rng rng(7);
  Tensor<float> x = oracle::randn<float>(rng, {4, 8, 16, 16});
  Tensor<float> w = oracle::randn<float>(rng, {8, 8, 3, 3});
  Tensor<float> b = oracle::randn<float>(rng, {8});
  Tensor<float> y1 = conv2d(x, w, b, 1, 1);
  Tensor<float> y2 = conv2d(x, w, b, 1, 1);
  check_equal(y1, y2);
}

TEST_CASE("max_pool2d basics") {
  Tensor<float> x = Tensor<float>::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
  CHECK(max_pool2d(x, 2).item() == 4.0f);

  Tensor<float> c = Tensor<float>::full({1, 1, 4, 4}, 2.5f);
  Tensor<float> pooled = max_pool2d(c, 2);
  for (float v : pooled.data()) CHECK(v == 2.5f);

  Tensor<float> odd = Tensor<float>::zeros({1, 1, 3, 4});
  CHECK_THROWS_AS(max_pool2d(odd, 2), GeometryError);
}

TEST_CASE("max_pool2d routes ties to the first row-major position") {
  Tape<float>::current().clear();
  Tensor<float> x = Tensor<float>::from_data({1, 1, 2, 2}, {5, 5, 1, 2});
  x.set_requires_grad(true);
  Tensor<float> y = max_pool2d(x, 2);
  CHECK(y.item() == 5.0f);
  backward(sum(y));
  auto g = x.grad();
  CHECK(g[0] == 1.0f);
  CHECK(g[1] == 0.0f);
  CHECK(g[2] == 0.0f);
  CHECK(g[3] == 0.0f);
  Tape<float>::current().clear();
}

TEST_CASE("upsample_nearest2x replicates 2x2 blocks") {
  Tensor<float> one = Tensor<float>::from_data({1, 1, 1, 1}, {1.0f});
  Tensor<float> up = upsample_nearest2x(one);
  CHECK(up.shape() == Shape{1, 1, 2, 2});
  for (float v : up.data()) CHECK(v == 1.0f);

  Tensor<float> x = Tensor<float>::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
  Tensor<float> y = upsample_nearest2x(x);
  const float expected[4][4] = {
      {1, 1, 2, 2}, {1, 1, 2, 2}, {3, 3, 4, 4}, {3, 3, 4, 4}};
  for (int h = 0; h < 4; ++h)
    for (int w = 0; w < 4; ++w) CHECK(y.at(0, 0, h, w) == expected[h][w]);
}

TEST_CASE("upsample_nearest2x backward sums each 2x2 block") {
  Tape<float>::current().clear();
  Tensor<float> x = Tensor<float>::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
  x.set_requires_grad(true);
  backward(sum(upsample_nearest2x(x)));
  for (float g : x.grad()) CHECK(g == 4.0f);
  Tape<float>::current().clear();
}

TEST_CASE("relu clamps negatives and passes positives") {
  Tensor<float> x = Tensor<float>::from_data({3}, {-1.0f, 0.0f, 2.0f});
  Tensor<float> y = relu(x);
  CHECK(y.data()[0] == 0.0f);
  CHECK(y.data()[1] == 0.0f);
  CHECK(y.data()[2] == 2.0f);

  Tensor<float> pos = Tensor<float>::from_data({3}, {0.5f, 1.0f, 7.0f});
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(relu(pos).data()[i] == pos.data()[i]);
}

TEST_CASE("relu subgradient at exactly zero is zero") {
  Tape<float>::current().clear();
  Tensor<float> x = Tensor<float>::from_data({3}, {-1.0f, 0.0f, 2.0f});
  x.set_requires_grad(true);
  backward(sum(relu(x)));
  auto g = x.grad();
  CHECK(g[0] == 0.0f);
  CHECK(g[1] == 0.0f);
  CHECK(g[2] == 1.0f);
  Tape<float>::current().clear();
}

TEST_CASE("linear matches the hand-derived dot product") {
  Tensor<float> x = Tensor<float>::from_data({1, 2}, {1, 2});
  Tensor<float> w = Tensor<float>::from_data({1, 2}, {3, 4});
  Tensor<float> b = Tensor<float>::from_data({1}, {1});
  CHECK(linear(x, w, b).item() == 12.0f);
}

TEST_CASE("linear identity and zero-input cases") {
  Tensor<float> x = Tensor<float>::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor<float> eye = Tensor<float>::zeros({3, 3});
  for (int i = 0; i < 3; ++i) eye.data()[static_cast<std::size_t>(i) * 4] = 1.0f;
  Tensor<float> zero_b = Tensor<float>::zeros({3});
  check_equal(linear(x, eye, zero_b), x);

  Tensor<float> zeros = Tensor<float>::zeros({2, 3});
  Tensor<float> w = Tensor<float>::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor<float> b = Tensor<float>::from_data({2}, {0.5f, -2.0f});
  Tensor<float> y = linear(zeros, w, b);
  for (int n = 0; n < 2; ++n) {
    CHECK(y.data()[static_cast<std::size_t>(n) * 2] == 0.5f);
    CHECK(y.data()[static_cast<std::size_t>(n) * 2 + 1] == -2.0f);
  }

  Tensor<float> w_bad = Tensor<float>::zeros({2, 4});
  CHECK_THROWS_AS(linear(x, w_bad, b), ContractError);
}

TEST_CASE("concat_channels keeps argument order and splits gradients") {
  Rng rng(5);
  Tensor<float> a = oracle::randn<float>(rng, {2, 1, 3, 3});
  Tensor<float> b = oracle::randn<float>(rng, {2, 1, 3, 3});

  Tensor<float> single = concat_channels<float>({a});
  check_equal(single, a);

  Tensor<float> y = concat_channels<float>({a, b});
  CHECK(y.shape() == Shape{2, 2, 3, 3});
  for (int n = 0; n < 2; ++n)
    for (int h = 0; h < 3; ++h)
      for (int w = 0; w < 3; ++w) {
        CHECK(y.at(n, 0, h, w) == a.at(n, 0, h, w));
        CHECK(y.at(n, 1, h, w) == b.at(n, 0, h, w));
      }

  // backward splits: gradient of sum(concat . scaled halves) against
  // independent single-input passes
  Tape<float>::current().clear();
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  backward(sum(mul(concat_channels<float>({a, b}),
                   concat_channels<float>({a, b}))));
  std::vector<float> ga(a.grad().begin(), a.grad().end());
  std::vector<float> gb(b.grad().begin(), b.grad().end());
  Tape<float>::current().clear();
  a.zero_grad();
  b.zero_grad();
  backward(sum(mul(a, a)));
  backward(sum(mul(b, b)));
  for (std::size_t i = 0; i < ga.size(); ++i) CHECK(ga[i] == a.grad()[i]);
  for (std::size_t i = 0; i < gb.size(); ++i) CHECK(gb[i] == b.grad()[i]);
  Tape<float>::current().clear();

  Tensor<float> c = Tensor<float>::zeros({2, 1, 4, 3});
  CHECK_THROWS_AS(concat_channels<float>({a, c}), ContractError);
}

TEST_CASE("broadcast_spatial replicates values and sums gradients") {
  Tensor<float> v = Tensor<float>::from_data({1, 1}, {7.0f});
  Tensor<float> map = broadcast_spatial(v, 2, 2);
  CHECK(map.shape() == Shape{1, 1, 2, 2});
  for (float x : map.data()) CHECK(x == 7.0f);

  Tensor<float> w = Tensor<float>::from_data({1, 2}, {3.0f, -1.0f});
  Tensor<float> tiny = broadcast_spatial(w, 1, 1);
  CHECK(tiny.shape() == Shape{1, 2, 1, 1});
  CHECK(tiny.data()[0] == 3.0f);
  CHECK(tiny.data()[1] == -1.0f);

  Tape<float>::current().clear();
  Tensor<float> s = Tensor<float>::from_data({1, 1}, {2.0f});
  s.set_requires_grad(true);
  backward(sum(broadcast_spatial(s, 3, 3)));
  CHECK(s.grad()[0] == 9.0f);
  Tape<float>::current().clear();
}

TEST_CASE("ops are bit-deterministic for identical inputs") {
  Rng rng(99);
  Tensor<float> x = oracle::randn<float>(rng, {2, 4, 8, 8});
  Tensor<float> w = oracle::randn<float>(rng, {4, 4, 3, 3});
  Tensor<float> b = oracle::randn<float>(rng, {4});
  check_equal(relu(conv2d(x, w, b, 1, 1)), relu(conv2d(x, w, b, 1, 1)));
  check_equal(max_pool2d(x, 2), max_pool2d(x, 2));
  check_equal(upsample_nearest2x(x), upsample_nearest2x(x));
}
