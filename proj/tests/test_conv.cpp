#include <cmath>
#include <random>

#include "doctest.h"
#include "itgan/tensor.hpp"
#include "oracles.hpp"

using namespace itgan;

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST_CASE("conv2d fixed cases") {
  std::mt19937_64 rng(11);
  SUBCASE("zero input and bias") {
    auto k = oracle::random_tensor<float>({4, 3, 5, 5}, rng);
    auto y = conv2d(TensorF::zeros({2, 3, 8, 8}), k, TensorF::zeros({4}), {2, 2}, {2, 2});
    CHECK(y.shape() == Shape{2, 4, 4, 4});
    for (float v : y.data()) CHECK(v == 0.f);
  }
  SUBCASE("unit 1x1 kernel is the identity") {
    auto x = oracle::random_tensor<float>({2, 1, 5, 7}, rng);
    auto y = conv2d(x, TensorF::ones({1, 1, 1, 1}), TensorF::zeros({1}), {1, 1}, {0, 0});
    CHECK(y.shape() == x.shape());
    for (Index i = 0; i < x.numel(); ++i) CHECK(y.data()[i] == x.data()[i]);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(conv2d(TensorF({1, 2, 6, 6}), TensorF({3, 3, 2, 2}), TensorF({3}), {1, 1},
                           {0, 0}),
                    DimensionError);
    CHECK_THROWS_AS(conv2d(TensorF({1, 2, 6, 6}), TensorF({3, 2, 2, 2}), TensorF({3}), {0, 1},
                           {0, 0}),
                    ArgumentError);
    CHECK_THROWS_AS(conv2d(TensorF({1, 2, 2, 2}), TensorF({3, 2, 5, 5}), TensorF({3}), {1, 1},
                           {0, 0}),
                    DimensionError);
  }
}

TEST_CASE("conv2d matches the nested-loop oracle") {
  std::mt19937_64 rng(12);
  struct Case {
    Shape x, k;
    Index s, p;
  };
  const Case cases[] = {{{1, 2, 6, 6}, {3, 2, 2, 2}, 2, 0},
                        {{2, 3, 9, 7}, {4, 3, 5, 5}, 2, 2},
                        {{3, 1, 5, 5}, {2, 1, 3, 3}, 1, 1},
                        {{1, 4, 8, 8}, {5, 4, 5, 5}, 2, 1}};
  for (const auto& c : cases) {
    auto x = oracle::random_tensor<float>(c.x, rng);
    auto k = oracle::random_tensor<float>(c.k, rng);
    auto b = oracle::random_tensor<float>({c.k[0]}, rng);
    Index oh = 0, ow = 0;
    auto expect = oracle::conv2d(oracle::to_double(x), c.x, oracle::to_double(k), c.k,
                                 oracle::to_double(b), c.s, c.s, c.p, c.p, oh, ow);
    auto y = conv2d(x, k, b, {c.s, c.s}, {c.p, c.p});
    REQUIRE(y.shape() == Shape{c.x[0], c.k[0], oh, ow});
    double worst = 0;
    for (std::size_t i = 0; i < expect.size(); ++i)
      worst = std::max(worst, std::abs(y.data()[i] - expect[i]));
    CHECK(worst < 1e-5);  // 32-bit path; the 64-bit path is held to 1e-6 below

    auto y64 = conv2d(TensorD(c.x, oracle::to_double(x)), TensorD(c.k, oracle::to_double(k)),
                      TensorD({c.k[0]}, oracle::to_double(b)), {c.s, c.s}, {c.p, c.p});
    worst = 0;
    for (std::size_t i = 0; i < expect.size(); ++i)
      worst = std::max(worst, std::abs(y64.data()[i] - expect[i]));
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("conv_transpose2d") {
  std::mt19937_64 rng(13);
  SUBCASE("zero input broadcasts bias") {
    TensorF bias({3}, {0.5f, -1.f, 2.f});
    auto y = conv_transpose2d(TensorF::zeros({2, 4, 3, 3}), oracle::random_tensor<float>({4, 3, 5, 5}, rng),
                              bias, {2, 2}, {2, 2}, {6, 6});
    CHECK(y.shape() == Shape{2, 3, 6, 6});
    for (Index i = 0; i < y.numel(); ++i) CHECK(y.data()[i] == bias.data()[(i / 36) % 3]);
  }
  SUBCASE("matches the scatter oracle") {
    struct Case {
      Shape x, k;
      Index s, p, out;
    };
    const Case cases[] = {{{1, 3, 4, 4}, {3, 2, 5, 5}, 2, 2, 8},
                          {{2, 2, 3, 3}, {2, 4, 5, 5}, 2, 2, 5},
                          {{1, 1, 5, 5}, {1, 2, 3, 3}, 1, 1, 5}};
    for (const auto& c : cases) {
      auto x = oracle::random_tensor<double>(c.x, rng);
      auto k = oracle::random_tensor<double>(c.k, rng);
      auto b = oracle::random_tensor<double>({c.k[1]}, rng);
      auto expect = oracle::conv_transpose2d(oracle::to_double(x), c.x, oracle::to_double(k), c.k,
                                             oracle::to_double(b), c.s, c.s, c.p, c.p, c.out,
                                             c.out);
      auto y = conv_transpose2d(x, k, b, {c.s, c.s}, {c.p, c.p}, {c.out, c.out});
      double worst = 0;
      for (std::size_t i = 0; i < expect.size(); ++i)
        worst = std::max(worst, std::abs(y.data()[i] - expect[i]));
      CHECK(worst < 1e-6);
    }
  }
  SUBCASE("output size outside the stride window") {
    try {
      conv_transpose2d(TensorF({1, 2, 4, 4}), TensorF({2, 1, 5, 5}), TensorF({1}), {2, 2},
                       {2, 2}, {10, 8});
      FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
      CHECK(std::string(e.what()).find("[7, 8]") != std::string::npos);
    }
  }
  SUBCASE("8 -> 128 shape chain doubles four times") {
    // base 8 → 16 → 32 → 64 → 128 with 5x5 kernels at stride 2, padding 2.
    TensorF x({1, 8, 8, 8});
    const Index channels[] = {8, 4, 4, 2, 3};
    Index side = 8;
    for (int stage = 0; stage < 4; ++stage) {
      auto k = oracle::random_tensor<float>({channels[stage], channels[stage + 1], 5, 5}, rng, -0.1, 0.1);
      x = conv_transpose2d(x, k, TensorF::zeros({channels[stage + 1]}), {2, 2}, {2, 2},
                           {side * 2, side * 2});
      side *= 2;
    }
    CHECK(x.shape() == Shape{1, 3, 128, 128});
  }
}

TEST_CASE("conv adjoint identity and linearity") {
  std::mt19937_64 rng(14);
  struct Case {
    Shape x, k;
    Index s, p;
  };
  const Case cases[] = {{{2, 3, 8, 8}, {4, 3, 5, 5}, 2, 2},
                        {{1, 2, 7, 9}, {3, 2, 3, 3}, 2, 1},
                        {{3, 1, 6, 6}, {2, 1, 2, 2}, 1, 0}};
  for (const auto& c : cases) {
    auto x = oracle::random_tensor<double>(c.x, rng);
    auto k = oracle::random_tensor<double>(c.k, rng);
    auto cx = conv2d(x, k, TensorD::zeros({c.k[0]}), {c.s, c.s}, {c.p, c.p});
    auto y = oracle::random_tensor<double>(cx.shape(), rng);
    // Same kernel tensor read as [Cin_of_transpose = Cout, Cout_of_transpose = Cin].
    auto ty = conv_transpose2d(y, k, TensorD::zeros({c.x[1]}), {c.s, c.s}, {c.p, c.p},
                               {c.x[2], c.x[3]});
    CHECK(std::abs(dot(cx.data(), y.data()) - dot(x.data(), ty.data())) < 1e-6);

    auto x2 = oracle::random_tensor<double>(c.x, rng);
    const double a = 0.7, b = -1.3;
    auto lhs = conv2d(add(scale(x, a), scale(x2, b)), k, TensorD::zeros({c.k[0]}), {c.s, c.s},
                      {c.p, c.p});
    auto rhs = add(scale(cx, a), scale(conv2d(x2, k, TensorD::zeros({c.k[0]}), {c.s, c.s},
                                               {c.p, c.p}),
                                        b));
    double worst = 0;
    for (Index i = 0; i < lhs.numel(); ++i)
      worst = std::max(worst, std::abs(lhs.data()[i] - rhs.data()[i]));
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("forward is bitwise deterministic") {
  std::mt19937_64 rng(15);
  auto x = oracle::random_tensor<float>({4, 3, 16, 16}, rng);
  auto k = oracle::random_tensor<float>({8, 3, 5, 5}, rng);
  auto b = oracle::random_tensor<float>({8}, rng);
  auto y1 = conv2d(x, k, b, {2, 2}, {2, 2});
  auto y2 = conv2d(x, k, b, {2, 2}, {2, 2});
  CHECK(std::equal(y1.data().begin(), y1.data().end(), y2.data().begin()));
}
