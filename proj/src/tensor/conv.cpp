#include <algorithm>

#include "itgan/tensor.hpp"

namespace itgan {

namespace {

// Geometry of a cross-correlation from an image (channels × height × width)
// onto a grid (out_h × out_w).
struct ConvGeometry {
  Index batch, channels, height, width;
  Index kh, kw, sh, sw, ph, pw;
  Index out_h, out_w;

  Index rows() const { return channels * kh * kw; }
  Index cols() const { return batch * out_h * out_w; }
};

template <class T>
std::vector<T> im2col(const T* image, const ConvGeometry& g) {
  const Index n = g.cols();
  std::vector<T> cols(static_cast<std::size_t>(g.rows() * n), T(0));
  for (Index c = 0; c < g.channels; ++c) {
    for (Index ki = 0; ki < g.kh; ++ki) {
      for (Index kj = 0; kj < g.kw; ++kj) {
        T* row = cols.data() + ((c * g.kh + ki) * g.kw + kj) * n;
        for (Index b = 0; b < g.batch; ++b) {
          const T* plane = image + (b * g.channels + c) * g.height * g.width;
          for (Index oy = 0; oy < g.out_h; ++oy) {
            const Index iy = oy * g.sh - g.ph + ki;
            T* dst = row + (b * g.out_h + oy) * g.out_w;
            if (iy < 0 || iy >= g.height) continue;
            const T* src = plane + iy * g.width;
            for (Index ox = 0; ox < g.out_w; ++ox) {
              const Index ix = ox * g.sw - g.pw + kj;
              if (ix >= 0 && ix < g.width) dst[ox] = src[ix];
            }
          }
        }
      }
    }
  }
  return cols;
}

// Scatter-add of columns back onto the image; adjoint of im2col.
template <class T>
void col2im(const T* cols, const ConvGeometry& g, T* image) {
  const Index n = g.cols();
  for (Index c = 0; c < g.channels; ++c) {
    for (Index ki = 0; ki < g.kh; ++ki) {
      for (Index kj = 0; kj < g.kw; ++kj) {
        const T* row = cols + ((c * g.kh + ki) * g.kw + kj) * n;
        for (Index b = 0; b < g.batch; ++b) {
          T* plane = image + (b * g.channels + c) * g.height * g.width;
          for (Index oy = 0; oy < g.out_h; ++oy) {
            const Index iy = oy * g.sh - g.ph + ki;
            if (iy < 0 || iy >= g.height) continue;
            const T* src = row + (b * g.out_h + oy) * g.out_w;
            T* dst = plane + iy * g.width;
            for (Index ox = 0; ox < g.out_w; ++ox) {
              const Index ix = ox * g.sw - g.pw + kj;
              if (ix >= 0 && ix < g.width) dst[ix] += src[ox];
            }
          }
        }
      }
    }
  }
}

// [B, C, P] <-> [C, B·P]
template <class T>
std::vector<T> batch_to_channel_major(const T* src, Index batch, Index channels, Index plane) {
  std::vector<T> out(static_cast<std::size_t>(batch * channels * plane));
  for (Index b = 0; b < batch; ++b)
    for (Index c = 0; c < channels; ++c)
      std::copy_n(src + (b * channels + c) * plane, plane, out.data() + (c * batch + b) * plane);
  return out;
}

template <class T>
void channel_major_to_batch_add(const T* src, Index batch, Index channels, Index plane, T* dst) {
  for (Index b = 0; b < batch; ++b)
    for (Index c = 0; c < channels; ++c) {
      const T* s = src + (c * batch + b) * plane;
      T* d = dst + (b * channels + c) * plane;
      for (Index p = 0; p < plane; ++p) d[p] += s[p];
    }
}

template <class T>
void add_bias_grad(std::span<const T> g, Index batch, Index channels, Index plane,
                   std::vector<T>& gb) {
  for (Index b = 0; b < batch; ++b)
    for (Index c = 0; c < channels; ++c) {
      double acc = 0.0;
      const T* s = g.data() + (b * channels + c) * plane;
      for (Index p = 0; p < plane; ++p) acc += static_cast<double>(s[p]);
      gb[c] += static_cast<T>(acc);
    }
}

void check_stride(Pair stride) {
  if (stride.h <= 0 || stride.w <= 0) {
    throw ArgumentError("stride must be positive, got (" + std::to_string(stride.h) + "," +
                        std::to_string(stride.w) + ")");
  }
}

}  // namespace

Index conv_output_extent(Index in, Index kernel, Index stride, Index pad) {
  if (stride <= 0) throw ArgumentError("stride must be positive");
  if (in + 2 * pad < kernel) {
    throw DimensionError("padded extent " + std::to_string(in + 2 * pad) +
                         " is smaller than kernel " + std::to_string(kernel));
  }
  return (in + 2 * pad - kernel) / stride + 1;
}

template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                 Pair stride, Pair padding) {
  check_stride(stride);
  if (input.rank() != 4 || kernel.rank() != 4) {
    throw DimensionError("conv2d: expected 4-D input and kernel, got " +
                         shape_str(input.shape()) + " and " + shape_str(kernel.shape()));
  }
  if (kernel.dim(1) != input.dim(1)) {
    throw DimensionError("conv2d: input channels " + std::to_string(input.dim(1)) +
                         " do not match kernel " + shape_str(kernel.shape()));
  }
  const Index cout = kernel.dim(0);
  if (bias.rank() != 1 || bias.dim(0) != cout) {
    throw DimensionError("conv2d: bias " + shape_str(bias.shape()) + " for " +
                         std::to_string(cout) + " output channels");
  }
  ConvGeometry geo{input.dim(0), input.dim(1), input.dim(2), input.dim(3), kernel.dim(2),
                   kernel.dim(3), stride.h,    stride.w,    padding.h,    padding.w,
                   0,             0};
  geo.out_h = conv_output_extent(geo.height, geo.kh, geo.sh, geo.ph);
  geo.out_w = conv_output_extent(geo.width, geo.kw, geo.sw, geo.pw);

  const Index k = geo.rows(), n = geo.cols(), plane = geo.out_h * geo.out_w;
  auto cols = std::make_shared<std::vector<T>>(im2col(input.data().data(), geo));
  std::vector<T> outmat(static_cast<std::size_t>(cout * n));
  gemm<T>(false, false, cout, n, k, T(1), kernel.data().data(), k, cols->data(), n, T(0),
          outmat.data(), n);

  std::vector<T> out(static_cast<std::size_t>(geo.batch * cout * plane));
  auto bv = bias.data();
  for (Index b = 0; b < geo.batch; ++b)
    for (Index c = 0; c < cout; ++c) {
      const T* s = outmat.data() + (c * geo.batch + b) * plane;
      T* d = out.data() + (b * cout + c) * plane;
      for (Index p = 0; p < plane; ++p) d[p] = s[p] + bv[c];
    }

  auto pk = kernel.impl_ptr();
  return Tensor<T>::from_op(
      Shape{geo.batch, cout, geo.out_h, geo.out_w}, std::move(out), {input, kernel, bias},
      "conv2d",
      [geo, cols, pk, cout, k, n, plane](const auto&, std::span<const T> g,
                                         std::span<std::vector<T>*> gin) {
        auto gmat = batch_to_channel_major(g.data(), geo.batch, cout, plane);
        if (gin[1])
          gemm<T>(false, true, cout, k, n, T(1), gmat.data(), n, cols->data(), n, T(1),
                  gin[1]->data(), k);
        if (gin[0]) {
          std::vector<T> gcols(static_cast<std::size_t>(k * n));
          gemm<T>(true, false, k, n, cout, T(1), pk->data.data(), k, gmat.data(), n, T(0),
                  gcols.data(), n);
          col2im(gcols.data(), geo, gin[0]->data());
        }
        if (gin[2]) add_bias_grad(g, geo.batch, cout, plane, *gin[2]);
      });
}

template <class T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& kernel,
                           const Tensor<T>& bias, Pair stride, Pair padding, Pair output_size) {
  check_stride(stride);
  if (input.rank() != 4 || kernel.rank() != 4) {
    throw DimensionError("conv_transpose2d: expected 4-D input and kernel, got " +
                         shape_str(input.shape()) + " and " + shape_str(kernel.shape()));
  }
  if (kernel.dim(0) != input.dim(1)) {
    throw DimensionError("conv_transpose2d: input channels " + std::to_string(input.dim(1)) +
                         " do not match kernel " + shape_str(kernel.shape()));
  }
  const Index cin = input.dim(1), cout = kernel.dim(1);
  if (bias.rank() != 1 || bias.dim(0) != cout) {
    throw DimensionError("conv_transpose2d: bias " + shape_str(bias.shape()) + " for " +
                         std::to_string(cout) + " output channels");
  }
  const Index kh = kernel.dim(2), kw = kernel.dim(3);
  auto check_window = [](Index in, Index out, Index k, Index s, Index p, const char* axis) {
    const Index lo = (in - 1) * s - 2 * p + k;
    const Index hi = lo + s - 1;
    if (out < lo || out > hi) {
      throw DimensionError(std::string("conv_transpose2d: output ") + axis + " " +
                           std::to_string(out) + " outside legal window [" + std::to_string(lo) +
                           ", " + std::to_string(hi) + "]");
    }
  };
  check_window(input.dim(2), output_size.h, kh, stride.h, padding.h, "height");
  check_window(input.dim(3), output_size.w, kw, stride.w, padding.w, "width");

  // The conv2d that maps the output image back onto the input grid.
  const ConvGeometry geo{input.dim(0), cout, output_size.h, output_size.w, kh,
                         kw,           stride.h, stride.w, padding.h,    padding.w,
                         input.dim(2), input.dim(3)};
  const Index kc = geo.rows(), n = geo.cols(), in_plane = geo.out_h * geo.out_w;
  const Index out_plane = geo.height * geo.width;

  auto xmat = std::make_shared<std::vector<T>>(
      batch_to_channel_major(input.data().data(), geo.batch, cin, in_plane));
  std::vector<T> cols(static_cast<std::size_t>(kc * n));
  gemm<T>(true, false, kc, n, cin, T(1), kernel.data().data(), kc, xmat->data(), n, T(0),
          cols.data(), n);
  std::vector<T> out(static_cast<std::size_t>(geo.batch * cout * out_plane), T(0));
  col2im(cols.data(), geo, out.data());
  auto bv = bias.data();
  for (Index b = 0; b < geo.batch; ++b)
    for (Index c = 0; c < cout; ++c) {
      T* d = out.data() + (b * cout + c) * out_plane;
      for (Index p = 0; p < out_plane; ++p) d[p] += bv[c];
    }

  auto pk = kernel.impl_ptr();
  return Tensor<T>::from_op(
      Shape{geo.batch, cout, geo.height, geo.width}, std::move(out), {input, kernel, bias},
      "conv_transpose2d",
      [geo, xmat, pk, cin, cout, kc, n, in_plane, out_plane](const auto&, std::span<const T> g,
                                                             std::span<std::vector<T>*> gin) {
        auto gcols = im2col(g.data(), geo);
        if (gin[0]) {
          std::vector<T> gx(static_cast<std::size_t>(cin * n));
          gemm<T>(false, false, cin, n, kc, T(1), pk->data.data(), kc, gcols.data(), n, T(0),
                  gx.data(), n);
          channel_major_to_batch_add(gx.data(), geo.batch, cin, in_plane, gin[0]->data());
        }
        if (gin[1])
          gemm<T>(false, true, cin, kc, n, T(1), xmat->data(), n, gcols.data(), n, T(1),
                  gin[1]->data(), kc);
        if (gin[2]) add_bias_grad(g, geo.batch, cout, out_plane, *gin[2]);
      });
}

template Tensor<float> conv2d(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&,
                              Pair, Pair);
template Tensor<double> conv2d(const Tensor<double>&, const Tensor<double>&,
                               const Tensor<double>&, Pair, Pair);
template Tensor<float> conv_transpose2d(const Tensor<float>&, const Tensor<float>&,
                                        const Tensor<float>&, Pair, Pair, Pair);
template Tensor<double> conv_transpose2d(const Tensor<double>&, const Tensor<double>&,
                                         const Tensor<double>&, Pair, Pair, Pair);

}  // namespace itgan
