#pragma once

// Finite-difference checks over every differentiable op, shared by the unit
// tests and the acceptance runner.

#include <array>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "itgan/losses.hpp"
#include "itgan/nn.hpp"
#include "itgan/tensor.hpp"
#include "oracles.hpp"

namespace gradsuite {

using itgan::Shape;
using itgan::TensorD;

struct CaseResult {
  std::string name;
  double max_error;
  std::string worst;
};

using Fn = std::function<TensorD(const std::vector<TensorD>&)>;

inline TensorD away_from_zero(Shape shape, std::mt19937_64& rng) {
  auto t = oracle::random_tensor<double>(std::move(shape), rng, 0.1, 1.0);
  std::bernoulli_distribution sign(0.5);
  for (auto& v : t.data())
    if (sign(rng)) v = -v;
  return t;
}

// Random projection so every output entry gets a distinct upstream gradient.
inline TensorD project(const TensorD& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto w = oracle::random_tensor<double>(y.shape(), rng);
  return itgan::sum(itgan::mul(y, w));
}

inline void run(std::vector<CaseResult>& out, const std::string& name, std::vector<TensorD> in,
                const Fn& f, std::size_t max_entries = 0) {
  auto r = oracle::grad_check(std::move(in), f, 1e-5, max_entries);
  out.push_back({name, r.max_rel_error, r.worst});
}

inline std::vector<CaseResult> layer_cases() {
  using namespace itgan;
  std::vector<CaseResult> out;
  std::mt19937_64 rng(2024);
  auto rnd = [&](Shape s) { return oracle::random_tensor<double>(std::move(s), rng); };
  const std::vector<Shape> shapes = {{5}, {3, 4}, {2, 3, 2, 2}};

  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto& s = shapes[i];
    const std::string tag = " " + shape_str(s);
    const std::uint64_t seed = 100 + i;
    run(out, "add" + tag, {rnd(s), rnd(s)},
        [=](const auto& v) { return project(add(v[0], v[1]), seed); });
    run(out, "sub" + tag, {rnd(s), rnd(s)},
        [=](const auto& v) { return project(sub(v[0], v[1]), seed); });
    run(out, "mul" + tag, {rnd(s), rnd(s)},
        [=](const auto& v) { return project(mul(v[0], v[1]), seed); });
    run(out, "scale" + tag, {rnd(s)}, [=](const auto& v) { return project(scale(v[0], -1.7), seed); });
    run(out, "add_scalar" + tag, {rnd(s)},
        [=](const auto& v) { return project(add_scalar(v[0], 0.3), seed); });
    run(out, "relu" + tag, {away_from_zero(s, rng)},
        [=](const auto& v) { return project(relu(v[0]), seed); });
    run(out, "leaky_relu" + tag, {away_from_zero(s, rng)},
        [=](const auto& v) { return project(leaky_relu(v[0], 0.2), seed); });
    run(out, "tanh" + tag, {rnd(s)}, [=](const auto& v) { return project(itgan::tanh(v[0]), seed); });
    run(out, "sigmoid" + tag, {rnd(s)},
        [=](const auto& v) { return project(sigmoid(v[0]), seed); });
    run(out, "square" + tag, {rnd(s)}, [=](const auto& v) { return project(square(v[0]), seed); });
    run(out, "abs" + tag, {away_from_zero(s, rng)},
        [=](const auto& v) { return project(itgan::abs(v[0]), seed); });
    run(out, "clamped_log" + tag, {oracle::random_tensor<double>(s, rng, 0.2, 2.0)},
        [=](const auto& v) { return project(clamped_log(v[0], 1e-7), seed); });
    run(out, "sum" + tag, {rnd(s)}, [](const auto& v) { return sum(square(v[0])); });
    run(out, "mean" + tag, {rnd(s)}, [](const auto& v) { return mean(square(v[0])); });
    run(out, "reshape" + tag, {rnd(s)}, [=](const auto& v) {
      return project(reshape(v[0], Shape{shape_numel(v[0].shape())}), seed);
    });
  }

  const std::vector<std::array<Index, 3>> mm = {{2, 3, 4}, {1, 5, 2}, {4, 4, 3}};
  for (const auto& [m, k, n] : mm) {
    const std::string tag = " " + std::to_string(m) + "x" + std::to_string(k) + "x" +
                            std::to_string(n);
    run(out, "matmul" + tag, {rnd({m, k}), rnd({k, n})},
        [](const auto& v) { return project(matmul(v[0], v[1]), 7); });
    run(out, "linear" + tag, {rnd({m, k}), rnd({n, k}), rnd({n})},
        [](const auto& v) { return project(linear(v[0], v[1], v[2]), 8); });
    run(out, "concat_cols" + tag, {rnd({m, k}), rnd({m, n})},
        [](const auto& v) { return project(concat_cols(v[0], v[1]), 9); });
    run(out, "slice_rows" + tag, {rnd({m + 1, k})},
        [m = m](const auto& v) { return project(slice_rows(v[0], 1, m + 1), 10); });
    run(out, "weighted_sum" + tag, {rnd({m, k}), rnd({k, n})}, [](const auto& v) {
      const std::vector<TensorD> terms = {sum(square(v[0])), sum(v[1])};
      const std::vector<double> w = {2.0, 0.5};
      return weighted_sum<double>(terms, w);
    });
  }

  struct ConvCase {
    Shape x, k;
    Index s, p;
  };
  const std::vector<ConvCase> convs = {{{1, 2, 6, 6}, {3, 2, 2, 2}, 2, 0},
                                       {{2, 3, 8, 8}, {2, 3, 5, 5}, 2, 2},
                                       {{2, 1, 5, 4}, {2, 1, 3, 3}, 1, 1}};
  for (const auto& c : convs) {
    const std::string tag = " " + shape_str(c.x) + "*" + shape_str(c.k);
    run(out, "conv2d" + tag, {rnd(c.x), rnd(c.k), rnd({c.k[0]})}, [c](const auto& v) {
      return project(conv2d(v[0], v[1], v[2], {c.s, c.s}, {c.p, c.p}), 11);
    });
  }
  struct DeconvCase {
    Shape x, k;
    Index s, p, out;
  };
  const std::vector<DeconvCase> deconvs = {{{1, 2, 3, 3}, {2, 3, 5, 5}, 2, 2, 6},
                                           {{2, 3, 2, 2}, {3, 2, 5, 5}, 2, 2, 3},
                                           {{1, 1, 4, 4}, {1, 2, 3, 3}, 1, 1, 4}};
  for (const auto& c : deconvs) {
    const std::string tag = " " + shape_str(c.x) + "*" + shape_str(c.k);
    run(out, "conv_transpose2d" + tag, {rnd(c.x), rnd(c.k), rnd({c.k[1]})}, [c](const auto& v) {
      return project(conv_transpose2d(v[0], v[1], v[2], {c.s, c.s}, {c.p, c.p}, {c.out, c.out}),
                     12);
    });
  }

  const std::vector<Shape> bn_shapes = {{2, 3, 2, 2}, {4, 2, 1, 1}, {1, 2, 3, 3}};
  for (const auto& s : bn_shapes) {
    const std::string tag = " " + shape_str(s);
    const Index c = s[1];
    run(out, "batchnorm2d train" + tag, {rnd(s), rnd({c}), rnd({c})}, [c](const auto& v) {
      RunningStats<double> st{TensorD::zeros({c}), TensorD::ones({c})};
      return project(batchnorm2d(v[0], v[1], v[2], st, Mode::Train), 13);
    });
    run(out, "batchnorm2d eval" + tag, {rnd(s), rnd({c}), rnd({c})}, [c](const auto& v) {
      RunningStats<double> st{TensorD({c}, 0.1), TensorD({c}, 0.8)};
      return project(batchnorm2d(v[0], v[1], v[2], st, Mode::Eval), 13);
    });
  }
  return out;
}

inline std::vector<CaseResult> loss_cases() {
  using namespace itgan;
  std::vector<CaseResult> out;
  std::mt19937_64 rng(77);
  auto prob = [&](Shape s) { return oracle::random_tensor<double>(std::move(s), rng, 0.05, 0.95); };
  auto rnd = [&](Shape s) { return oracle::random_tensor<double>(std::move(s), rng); };
  auto labels = [&](Shape s) {
    auto t = TensorD(std::move(s));
    std::bernoulli_distribution bit(0.5);
    for (auto& v : t.data()) v = bit(rng) ? 1.0 : 0.0;
    return t;
  };
  const std::vector<Index> batches = {1, 3, 8};
  for (Index b : batches) {
    const std::string tag = " B=" + std::to_string(b);
    run(out, "adv_loss_d" + tag, {prob({b, 1}), prob({b, 1})},
        [](const auto& v) { return adv_loss_d(v[0], v[1]); });
    run(out, "adv_loss_g" + tag, {prob({b, 1})}, [](const auto& v) { return adv_loss_g(v[0]); });
    auto truth = labels({b, 5});
    run(out, "label_loss" + tag, {prob({b, 5})},
        [truth](const auto& v) { return label_loss(v[0], truth); });
    for (auto dist : {Distance::MeanSquared, Distance::MeanAbsolute}) {
      const std::string dtag = dist == Distance::MeanSquared ? " mse" : " mae";
      auto real = rnd({b, 3, 4, 4});
      run(out, "pixel_loss" + dtag + tag, {gradsuite::away_from_zero({b, 3, 4, 4}, rng)},
          [real, dist](const auto& v) { return pixel_loss(real, add(real, v[0]), dist); });
      run(out, "latent_loss" + dtag + tag, {away_from_zero({b, 100}, rng)},
          [real = rnd({b, 100}), dist](const auto& v) {
            return latent_loss(add(real, v[0]), real, dist);
          });
    }
    std::vector<TensorD> maps = {rnd({b, 2, 4, 4}), rnd({b, 3, 2, 2}), rnd({b, 4, 1, 1}),
                                 rnd({b, 2, 1, 1})};
    run(out, "perceptual_loss" + tag, {rnd({b, 2, 4, 4}), rnd({b, 3, 2, 2}), rnd({b, 4, 1, 1}),
                                       rnd({b, 2, 1, 1})},
        [maps](const auto& v) {
          const std::vector<double> alpha = {1.0, 0.5, 2.0, 1.0};
          return perceptual_loss<double>(maps, v, alpha);
        });
    run(out, "integrated_loss" + tag, {prob({}), prob({}), prob({})}, [](const auto& v) {
      return integrated_loss(v[0], v[1], v[2], LossWeights{});
    });
  }
  return out;
}

// Tiny networks (S=16, width 1/64) so every parameter can be perturbed.
inline itgan::ArchConfig tiny_arch() {
  itgan::ArchConfig a;
  a.image_size = 16;
  a.attr_count = 3;
  a.width = 1.0 / 64.0;
  return a;
}

inline std::vector<TensorD> params_of(const itgan::NamedTensors<double>& named) {
  std::vector<TensorD> v;
  for (const auto& [name, t] : named) v.push_back(t);
  return v;
}

inline std::vector<CaseResult> network_cases() {
  using namespace itgan;
  std::vector<CaseResult> out;
  std::mt19937_64 rng(91);
  struct Setup {
    int size, attrs;
    Index batch;
  };
  // Batchnorm over a 1x1 map and three rows is so curved that the eps=1e-5
  // central difference itself is off by ~1e-5, so B=3 runs at S=32.
  for (const auto& [size, attrs, batch] : {Setup{16, 3, 2}, Setup{32, 5, 3}, Setup{32, 2, 2}}) {
    auto arch = tiny_arch();
    arch.image_size = size;
    arch.attr_count = attrs;
    const std::string tag = " [S=" + std::to_string(size) + " d=" + std::to_string(attrs) +
                            " B=" + std::to_string(batch) + "]";
    auto bundle = init_params<double>(arch, std::vector<std::string>(attrs, "a"), 5);
    // Larger weights than the 0.02 init so every path carries visible signal.
    for (auto& [name, t] : bundle.state())
      if (name.find("running") == std::string::npos && name.find("gamma") == std::string::npos)
        for (auto& v : t.data()) v *= 10.0;
    auto z = oracle::random_tensor<double>({batch, 100}, rng);
    TensorD c({batch, attrs});
    std::bernoulli_distribution bit(0.5);
    for (auto& v : c.data()) v = bit(rng) ? 1.0 : 0.0;
    auto x = oracle::random_tensor<double>({batch, 3, size, size}, rng, -0.9, 0.9);

    run(out, "generator + pixel_loss" + tag, params_of(bundle.generator.parameters()),
        [&](const auto&) { return pixel_loss(x, bundle.generator.forward(z, c, Mode::Train)); });

    auto real_hidden = bundle.discriminator.forward(x, Mode::Train).hidden;
    auto x2 = oracle::random_tensor<double>({batch, 3, size, size}, rng, -0.9, 0.9);
    run(out, "discriminator + perceptual/adv" + tag, params_of(bundle.discriminator.parameters()),
        [&](const auto&) {
          auto o = bundle.discriminator.forward(x2, Mode::Train);
          const std::vector<TensorD> terms = {
              perceptual_loss<double>(real_hidden, o.hidden, std::vector<double>{1, 1, 1, 1}),
              adv_loss_g(o.source), mean(square(o.shared))};
          return weighted_sum<double>(terms, std::vector<double>{1.0, 1.0, 1.0});
        });

    auto shared = oracle::random_tensor<double>({batch, 1024}, rng);
    run(out, "classifier + label/latent" + tag, params_of(bundle.classifier.parameters()),
        [&](const auto&) {
          auto e = bundle.classifier.forward(shared);
          return add(label_loss(e.c, c), latent_loss(e.z, z));
        });
  }
  return out;
}

}  // namespace gradsuite
