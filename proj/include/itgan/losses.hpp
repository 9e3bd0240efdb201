#pragma once

#include <array>
#include <optional>
#include <span>

#include "itgan/tensor.hpp"

namespace itgan {

/// Floor applied inside every log so saturated probabilities stay finite.
inline constexpr double kLogFloor = 1e-7;

/// Distance used by the pixel, perceptual and latent terms.
enum class Distance { MeanSquared, MeanAbsolute };

/// Conic weights of the integrated loss: per·L_per + pix·L_pix + z·L_z.
struct LossWeights {
  double per = 2.0;
  double pix = 0.5;
  double z = 1.0;
  std::array<double, 4> alpha = {1.0, 1.0, 1.0, 1.0};
  Distance distance = Distance::MeanSquared;

  void validate() const;
  double combine(double l_per, double l_pix, double l_z) const {
    return per * l_per + pix * l_pix + z * l_z;
  }
  bool operator==(const LossWeights&) const = default;
};

/// Discriminator side: −mean log s_real − mean log(1 − s_fake).
template <class T>
Tensor<T> adv_loss_d(const Tensor<T>& s_real, const Tensor<T>& s_fake);

/// Non-saturating generator side: −mean log s_fake.
template <class T>
Tensor<T> adv_loss_g(const Tensor<T>& s_fake);

/// Mean binary cross-entropy between predicted probabilities and {0,1} labels.
template <class T>
Tensor<T> label_loss(const Tensor<T>& predicted, const Tensor<T>& truth);

template <class T>
Tensor<T> pixel_loss(const Tensor<T>& x_real, const Tensor<T>& x_rebuilt,
                     Distance distance = Distance::MeanSquared);

/// Σ αᵢ·dist(h_rebuiltᵢ, h_realᵢ). The real maps are detached: gradients only
/// reach the rebuilt branch.
template <class T>
Tensor<T> perceptual_loss(std::span<const Tensor<T>> hidden_real,
                          std::span<const Tensor<T>> hidden_rebuilt,
                          std::span<const double> alpha,
                          Distance distance = Distance::MeanSquared);

template <class T>
Tensor<T> latent_loss(const Tensor<T>& z_predicted, const Tensor<T>& z,
                      Distance distance = Distance::MeanSquared);

template <class T>
Tensor<T> integrated_loss(const Tensor<T>& l_per, const Tensor<T>& l_pix, const Tensor<T>& l_z,
                          const LossWeights& weights);

/// Per-iteration telemetry. Stage-2 terms are empty while stage 2 is off.
/// `total` is the generator-side objective l_adv_g + l_label + l_inte.
struct LossReport {
  long iteration = 0;
  int epoch = 0;
  double l_adv_d = 0.0;
  double l_adv_g = 0.0;
  double l_label = 0.0;
  std::optional<double> l_pix;
  std::optional<double> l_per;
  std::optional<double> l_z;
  std::optional<double> l_inte;
  double total = 0.0;
  int d_updates = 0;
  int g_updates = 0;

  /// |l_inte − (λ1·l_per + λ2·l_pix + λ3·l_z)|, zero when stage 2 did not run.
  double decomposition_error(const LossWeights& w) const;
  bool operator==(const LossReport&) const = default;
};

}  // namespace itgan
