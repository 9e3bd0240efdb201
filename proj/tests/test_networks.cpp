#include <cmath>
#include <random>

#include "doctest.h"
#include "gradcheck_suite.hpp"
#include "itgan/losses.hpp"
#include "itgan/nn.hpp"
#include "oracles.hpp"

using namespace itgan;

namespace {

ArchConfig small_arch(int size, int attrs = 8) {
  ArchConfig a;
  a.image_size = size;
  a.attr_count = attrs;
  a.width = 0.125;
  return a;
}

std::vector<std::string> names(int d) {
  std::vector<std::string> v;
  for (int i = 0; i < d; ++i) v.push_back("attr" + std::to_string(i));
  return v;
}

TensorF uniform_z(Index batch, std::mt19937_64& rng) {
  return oracle::random_tensor<float>({batch, 100}, rng, -0.999, 0.999);
}

TensorF binary_c(Index batch, Index d, std::mt19937_64& rng) {
  TensorF c({batch, d});
  std::bernoulli_distribution bit(0.5);
  for (auto& v : c.data()) v = bit(rng) ? 1.f : 0.f;
  return c;
}

}  // namespace

TEST_CASE("arch config validation") {
  ArchConfig a = small_arch(32);
  CHECK_NOTHROW(a.validate());
  a.image_size = 40;
  CHECK_THROWS_AS(a.validate(), ArgumentError);
  a = small_arch(32, 0);
  CHECK_THROWS_AS(a.validate(), ArgumentError);
  CHECK(small_arch(128).base() == 8);
  CHECK_THROWS_AS(init_params<float>(small_arch(32), names(3), 1), ArgumentError);
}

TEST_CASE("shape contract for every image size") {
  std::mt19937_64 rng(1);
  for (int size : {32, 64, 128}) {
    CAPTURE(size);
    auto b = init_params<float>(small_arch(size), names(8), 3);
    auto z = uniform_z(2, rng);
    auto c = binary_c(2, 8, rng);
    auto x = b.generator.forward(z, c, Mode::Train);
    CHECK(x.shape() == Shape{2, 3, size, size});
    for (float v : x.data()) CHECK((v > -1.f && v < 1.f));

    auto d = b.discriminator.forward(x, Mode::Train);
    REQUIRE(d.hidden.size() == 4);
    Index side = size;
    for (const auto& h : d.hidden) {
      side /= 2;
      CHECK(h.dim(2) == side);
      CHECK(h.dim(3) == side);
    }
    CHECK(d.shared.shape() == Shape{2, 1024});
    CHECK(d.source.shape() == Shape{2, 1});
    for (float s : d.source.data()) CHECK((s > 0.f && s < 1.f));

    auto e = b.classifier.forward(d.shared);
    CHECK(e.z.shape() == Shape{2, 100});
    CHECK(e.c.shape() == Shape{2, 8});
    for (float v : e.z.data()) CHECK((v > -1.f && v < 1.f));
    for (float v : e.c.data()) CHECK((v > 0.f && v < 1.f));
  }
}

TEST_CASE("generator output never reaches ±1 even with huge weights") {
  std::mt19937_64 rng(2);
  auto b = init_params<float>(small_arch(32), names(8), 4);
  for (auto& v : b.generator.deconv[3].kernel.data()) v *= 1e4f;
  auto x = b.generator.forward(uniform_z(4, rng), binary_c(4, 8, rng), Mode::Train);
  for (float v : x.data()) CHECK((v > -1.f && v < 1.f));
}

TEST_CASE("eval mode is a pure function of the input") {
  std::mt19937_64 rng(3);
  auto b = init_params<float>(small_arch(32), names(8), 5);
  // Some training-mode passes first so the running statistics are non-trivial.
  for (int i = 0; i < 3; ++i) b.generator.forward(uniform_z(4, rng), binary_c(4, 8, rng), Mode::Train);

  auto z1 = uniform_z(1, rng);
  auto c1 = binary_c(1, 8, rng);
  TensorF z({2, 100}), c({2, 8});
  for (int r = 0; r < 2; ++r) {
    std::copy(z1.data().begin(), z1.data().end(), z.data().begin() + r * 100);
    std::copy(c1.data().begin(), c1.data().end(), c.data().begin() + r * 8);
  }
  auto x = b.generator.forward(z, c, Mode::Eval);
  const Index row = 3 * 32 * 32;
  CHECK(std::equal(x.data().begin(), x.data().begin() + row, x.data().begin() + row));

  auto d1 = b.discriminator.forward(x, Mode::Eval);
  auto d2 = b.discriminator.forward(x, Mode::Eval);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(std::equal(d1.hidden[i].data().begin(), d1.hidden[i].data().end(),
                     d2.hidden[i].data().begin()));
  CHECK(std::equal(d1.shared.data().begin(), d1.shared.data().end(), d2.shared.data().begin()));
  CHECK(d1.source.data()[0] == d1.source.data()[1]);
}

TEST_CASE("dimension errors") {
  std::mt19937_64 rng(4);
  auto b = init_params<float>(small_arch(32), names(8), 6);
  CHECK_THROWS_AS(b.generator.forward(TensorF({2, 99}), binary_c(2, 8, rng), Mode::Train),
                  DimensionError);
  CHECK_THROWS_AS(b.generator.forward(uniform_z(2, rng), binary_c(2, 7, rng), Mode::Train),
                  DimensionError);
  CHECK_THROWS_AS(b.discriminator.forward(TensorF({1, 3, 64, 64}), Mode::Eval), DimensionError);
  CHECK_THROWS_AS(b.classifier.forward(TensorF({1, 512})), DimensionError);
}

TEST_CASE("classifier on a zero shared vector exposes the head biases") {
  auto b = init_params<float>(small_arch(32), names(8), 7);
  for (Index i = 0; i < 100; ++i) b.classifier.z_head.bias.data()[i] = 0.01f * static_cast<float>(i - 50);
  for (Index i = 0; i < 8; ++i) b.classifier.c_head.bias.data()[i] = 0.5f * static_cast<float>(i - 4);
  auto e = b.classifier.forward(TensorF::zeros({1, 1024}));
  for (Index i = 0; i < 100; ++i)
    CHECK(e.z.data()[i] == doctest::Approx(std::tanh(b.classifier.z_head.bias.data()[i])));
  for (Index i = 0; i < 8; ++i)
    CHECK(e.c.data()[i] ==
          doctest::Approx(1.0 / (1.0 + std::exp(-b.classifier.c_head.bias.data()[i]))));
}

TEST_CASE("init_params") {
  auto a = init_params<float>(small_arch(32), names(8), 42);
  auto b = init_params<float>(small_arch(32), names(8), 42);
  auto sa = a.state(), sb = b.state();
  REQUIRE(sa.size() == sb.size());
  for (std::size_t i = 0; i < sa.size(); ++i) {
    CHECK(sa[i].first == sb[i].first);
    CHECK(std::equal(sa[i].second.data().begin(), sa[i].second.data().end(),
                     sb[i].second.data().begin()));
  }
  for (auto& [name, t] : sa) {
    if (name.ends_with(".gamma"))
      for (float v : t.data()) CHECK(v == 1.f);
    if (name.ends_with(".beta") || name.ends_with(".bias"))
      for (float v : t.data()) CHECK(v == 0.f);
  }

  // Weight sample mean within 3σ/√n of zero.
  double s = 0;
  std::size_t n = 0;
  for (auto& [name, t] : sa) {
    if (!(name.ends_with(".weight") || name.ends_with(".kernel"))) continue;
    for (float v : t.data()) s += v;
    n += t.data().size();
  }
  REQUIRE(n >= 10000);
  CHECK(std::abs(s / static_cast<double>(n)) < 3.0 * kInitStddev / std::sqrt(static_cast<double>(n)));

  auto c = init_params<float>(small_arch(32), names(8), 43);
  CHECK_FALSE(std::equal(a.generator.project.weight.data().begin(),
                         a.generator.project.weight.data().end(),
                         c.generator.project.weight.data().begin()));
}

TEST_CASE("clone is deep") {
  auto a = init_params<float>(small_arch(32), names(8), 1);
  auto b = a.clone();
  b.generator.project.weight.data()[0] += 1.f;
  CHECK(a.generator.project.weight.data()[0] != b.generator.project.weight.data()[0]);
  CHECK(b.generator.project.weight.requires_grad());
  copy_state(a, b);
  CHECK(a.generator.project.weight.data()[0] == b.generator.project.weight.data()[0]);
}

TEST_CASE("network gradients match finite differences (64-bit)") {
  for (const auto& r : gradsuite::network_cases()) {
    INFO(r.name << " worst: " << r.worst);
    CHECK(r.max_error < 1e-6);
  }
}

TEST_CASE("32-bit generator gradient against 64-bit finite differences") {
  std::mt19937_64 rng(8);
  const auto arch = gradsuite::tiny_arch();
  auto f32 = init_params<float>(arch, {"a", "b", "c"}, 9);
  for (auto& [name, t] : f32.state())
    if (name.find("running") == std::string::npos && name.find("gamma") == std::string::npos)
      for (auto& v : t.data()) v *= 10.f;
  auto f64 = convert_precision<double>(f32);

  auto z = oracle::random_tensor<float>({2, 100}, rng);
  TensorF c({2, 3}, {0, 1, 1, 1, 0, 0});
  auto x = oracle::random_tensor<float>({2, 3, 16, 16}, rng, -0.9, 0.9);
  auto z64 = TensorD(z.shape(), oracle::to_double(z));
  auto c64 = TensorD(c.shape(), oracle::to_double(c));
  auto x64 = TensorD(x.shape(), oracle::to_double(x));

  pixel_loss(x, f32.generator.forward(z, c, Mode::Train)).backward();
  auto p32 = f32.generator.parameters();
  auto p64 = f64.generator.parameters();
  double worst = 0;
  NoGradGuard guard;
  for (std::size_t k = 0; k < p32.size(); ++k) {
    auto& t = p64[k].second;
    for (std::size_t i = 0; i < t.data().size(); i += 3) {
      const double saved = t.data()[i];
      t.data()[i] = saved + 1e-5;
      const double up = pixel_loss(x64, f64.generator.forward(z64, c64, Mode::Train)).item();
      t.data()[i] = saved - 1e-5;
      const double down = pixel_loss(x64, f64.generator.forward(z64, c64, Mode::Train)).item();
      t.data()[i] = saved;
      const double numeric = (up - down) / 2e-5;
      const double analytic = p32[k].second.grad()[i];
      worst = std::max(worst, std::abs(analytic - numeric) /
                                  std::max({1.0, std::abs(analytic), std::abs(numeric)}));
    }
  }
  CHECK(worst < 1e-3);
}
