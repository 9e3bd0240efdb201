#include "itgan/losses.hpp"

#include <cmath>
#include <string>

namespace itgan {

void LossWeights::validate() const {
  auto check = [](double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw ArgumentError(std::string("loss weight ") + name + " must be non-negative, got " +
                          std::to_string(v));
    }
  };
  check(per, "lambda_per");
  check(pix, "lambda_pix");
  check(z, "lambda_z");
  for (double a : alpha) check(a, "alpha");
}

double LossReport::decomposition_error(const LossWeights& w) const {
  if (!l_inte) return 0.0;
  return std::abs(*l_inte - w.combine(l_per.value_or(0.0), l_pix.value_or(0.0), l_z.value_or(0.0)));
}

namespace {

template <class T>
Tensor<T> mean_log(const Tensor<T>& p) {
  return mean(clamped_log(p, static_cast<T>(kLogFloor)));
}

template <class T>
Tensor<T> one_minus(const Tensor<T>& p) {
  return add_scalar(scale(p, T(-1)), T(1));
}

template <class T>
Tensor<T> distance(const Tensor<T>& a, const Tensor<T>& b, Distance d, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  auto diff = sub(a, b);
  return d == Distance::MeanSquared ? mean(square(diff)) : mean(abs(diff));
}

}  // namespace

template <class T>
Tensor<T> adv_loss_d(const Tensor<T>& s_real, const Tensor<T>& s_fake) {
  return sub(scale(mean_log(s_real), T(-1)), mean_log(one_minus(s_fake)));
}

template <class T>
Tensor<T> adv_loss_g(const Tensor<T>& s_fake) {
  return scale(mean_log(s_fake), T(-1));
}

template <class T>
Tensor<T> label_loss(const Tensor<T>& predicted, const Tensor<T>& truth) {
  if (predicted.shape() != truth.shape()) {
    throw DimensionError("label_loss: shape mismatch " + shape_str(predicted.shape()) + " vs " +
                         shape_str(truth.shape()));
  }
  for (T v : truth.data()) {
    if (v != T(0) && v != T(1)) {
      throw ArgumentError("label_loss: labels must be 0 or 1, got " + std::to_string(v));
    }
  }
  const T floor = static_cast<T>(kLogFloor);
  auto c = truth.detach();
  auto pos = mul(c, clamped_log(predicted, floor));
  auto neg = mul(one_minus(c), clamped_log(one_minus(predicted), floor));
  return scale(mean(add(pos, neg)), T(-1));
}

template <class T>
Tensor<T> pixel_loss(const Tensor<T>& x_real, const Tensor<T>& x_rebuilt, Distance d) {
  return distance(x_rebuilt, x_real, d, "pixel_loss");
}

template <class T>
Tensor<T> perceptual_loss(std::span<const Tensor<T>> hidden_real,
                          std::span<const Tensor<T>> hidden_rebuilt,
                          std::span<const double> alpha, Distance d) {
  if (hidden_real.size() != hidden_rebuilt.size() || hidden_real.size() != alpha.size()) {
    throw DimensionError("perceptual_loss: " + std::to_string(hidden_real.size()) +
                         " real maps, " + std::to_string(hidden_rebuilt.size()) +
                         " rebuilt maps, " + std::to_string(alpha.size()) + " weights");
  }
  std::vector<Tensor<T>> terms;
  for (std::size_t i = 0; i < hidden_real.size(); ++i) {
    terms.push_back(distance(hidden_rebuilt[i], hidden_real[i].detach(), d, "perceptual_loss"));
  }
  return weighted_sum<T>(terms, alpha);
}

template <class T>
Tensor<T> latent_loss(const Tensor<T>& z_predicted, const Tensor<T>& z, Distance d) {
  return distance(z_predicted, z, d, "latent_loss");
}

template <class T>
Tensor<T> integrated_loss(const Tensor<T>& l_per, const Tensor<T>& l_pix, const Tensor<T>& l_z,
                          const LossWeights& weights) {
  weights.validate();
  const std::vector<Tensor<T>> terms = {l_per, l_pix, l_z};
  const std::vector<double> w = {weights.per, weights.pix, weights.z};
  return weighted_sum<T>(terms, w);
}

#define ITGAN_INSTANTIATE(T)                                                                  \
  template Tensor<T> adv_loss_d(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> adv_loss_g(const Tensor<T>&);                                            \
  template Tensor<T> label_loss(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> pixel_loss(const Tensor<T>&, const Tensor<T>&, Distance);                \
  template Tensor<T> perceptual_loss(std::span<const Tensor<T>>, std::span<const Tensor<T>>,  \
                                     std::span<const double>, Distance);                      \
  template Tensor<T> latent_loss(const Tensor<T>&, const Tensor<T>&, Distance);               \
  template Tensor<T> integrated_loss(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,    \
                                     const LossWeights&);

ITGAN_INSTANTIATE(float)
ITGAN_INSTANTIATE(double)

#undef ITGAN_INSTANTIATE

}  // namespace itgan
