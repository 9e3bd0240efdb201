#include <cmath>

#include "itgan/tensor.hpp"

namespace itgan {

template <class T>
Tensor<T> batchnorm2d(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                      RunningStats<T>& stats, Mode mode) {
  if (input.rank() != 4) {
    throw DimensionError("batchnorm2d: expected [B,C,H,W], got " + shape_str(input.shape()));
  }
  const Index batch = input.dim(0), channels = input.dim(1);
  const Index plane = input.dim(2) * input.dim(3);
  const Shape per_channel{channels};
  if (gamma.shape() != per_channel || beta.shape() != per_channel ||
      stats.mean.shape() != per_channel || stats.var.shape() != per_channel) {
    throw DimensionError("batchnorm2d: parameters must have shape " + shape_str(per_channel));
  }
  const Index count = batch * plane;
  if (mode == Mode::Train && count < 2) {
    throw ArgumentError("batchnorm2d: train mode needs B*H*W >= 2, got " + std::to_string(count));
  }

  auto x = input.data();
  std::vector<T> mu(channels), inv_std(channels);
  if (mode == Mode::Train) {
    auto rm = stats.mean.data(), rv = stats.var.data();
    for (Index c = 0; c < channels; ++c) {
      double s = 0.0;
      for (Index b = 0; b < batch; ++b) {
        const T* p = x.data() + (b * channels + c) * plane;
        for (Index i = 0; i < plane; ++i) s += static_cast<double>(p[i]);
      }
      const double m = s / static_cast<double>(count);
      double ss = 0.0;
      for (Index b = 0; b < batch; ++b) {
        const T* p = x.data() + (b * channels + c) * plane;
        for (Index i = 0; i < plane; ++i) {
          const double d = static_cast<double>(p[i]) - m;
          ss += d * d;
        }
      }
      const double var = ss / static_cast<double>(count);
      mu[c] = static_cast<T>(m);
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + kBatchNormEps));
      const double unbiased = ss / static_cast<double>(count - 1);
      rm[c] = static_cast<T>(kBatchNormMomentum * rm[c] + (1.0 - kBatchNormMomentum) * m);
      rv[c] = static_cast<T>(kBatchNormMomentum * rv[c] + (1.0 - kBatchNormMomentum) * unbiased);
    }
  } else {
    auto rm = stats.mean.data(), rv = stats.var.data();
    for (Index c = 0; c < channels; ++c) {
      mu[c] = rm[c];
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(rv[c]) + kBatchNormEps));
    }
  }

  auto xhat = std::make_shared<std::vector<T>>(x.size());
  std::vector<T> out(x.size());
  auto gv = gamma.data(), bv = beta.data();
  for (Index b = 0; b < batch; ++b)
    for (Index c = 0; c < channels; ++c) {
      const Index off = (b * channels + c) * plane;
      for (Index i = 0; i < plane; ++i) {
        const T h = (x[off + i] - mu[c]) * inv_std[c];
        (*xhat)[off + i] = h;
        out[off + i] = gv[c] * h + bv[c];
      }
    }

  auto pg = gamma.impl_ptr();
  const bool train = mode == Mode::Train;
  return Tensor<T>::from_op(
      input.shape(), std::move(out), {input, gamma, beta}, "batchnorm2d",
      [xhat, inv_std, pg, batch, channels, plane, count, train](
          const auto&, std::span<const T> g, std::span<std::vector<T>*> gin) {
        for (Index c = 0; c < channels; ++c) {
          double sum_g = 0.0, sum_gx = 0.0;
          for (Index b = 0; b < batch; ++b) {
            const Index off = (b * channels + c) * plane;
            for (Index i = 0; i < plane; ++i) {
              sum_g += static_cast<double>(g[off + i]);
              sum_gx += static_cast<double>(g[off + i]) * static_cast<double>((*xhat)[off + i]);
            }
          }
          if (gin[1]) (*gin[1])[c] += static_cast<T>(sum_gx);
          if (gin[2]) (*gin[2])[c] += static_cast<T>(sum_g);
          if (!gin[0]) continue;
          const double scale = static_cast<double>(pg->data[c]) * inv_std[c];
          const double mean_g = sum_g / static_cast<double>(count);
          const double mean_gx = sum_gx / static_cast<double>(count);
          for (Index b = 0; b < batch; ++b) {
            const Index off = (b * channels + c) * plane;
            for (Index i = 0; i < plane; ++i) {
              double d = static_cast<double>(g[off + i]);
              // Batch statistics depend on every input; running stats do not.
              if (train) d -= mean_g + static_cast<double>((*xhat)[off + i]) * mean_gx;
              (*gin[0])[off + i] += static_cast<T>(scale * d);
            }
          }
        }
      });
}

template Tensor<float> batchnorm2d(const Tensor<float>&, const Tensor<float>&,
                                   const Tensor<float>&, RunningStats<float>&, Mode);
template Tensor<double> batchnorm2d(const Tensor<double>&, const Tensor<double>&,
                                    const Tensor<double>&, RunningStats<double>&, Mode);

}  // namespace itgan
