#include <algorithm>
#include <cmath>
#include <limits>

#include "itgan/tensor.hpp"

namespace itgan {

namespace {

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

// Unary op whose derivative is a function of (input, output).
template <class T, class F, class D>
Tensor<T> unary(const Tensor<T>& a, const char* name, F forward, D derivative) {
  auto x = a.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = forward(x[i]);
  auto in = a.impl_ptr();
  return Tensor<T>::from_op(a.shape(), std::move(out), {a}, name,
                            [in, derivative](const detail::TensorImpl<T>& o, std::span<const T> g,
                                             std::span<std::vector<T>*> gin) {
                              auto& ga = *gin[0];
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                ga[i] += g[i] * derivative(in->data[i], o.data[i]);
                              }
                            });
}

}  // namespace

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  auto x = a.data(), y = b.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  return Tensor<T>::from_op(a.shape(), std::move(out), {a, b}, "add",
                            [](const auto&, std::span<const T> g, std::span<std::vector<T>*> gin) {
                              for (auto* gi : gin) {
                                if (!gi) continue;
                                for (std::size_t i = 0; i < g.size(); ++i) (*gi)[i] += g[i];
                              }
                            });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  auto x = a.data(), y = b.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  return Tensor<T>::from_op(a.shape(), std::move(out), {a, b}, "sub",
                            [](const auto&, std::span<const T> g, std::span<std::vector<T>*> gin) {
                              if (gin[0])
                                for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i];
                              if (gin[1])
                                for (std::size_t i = 0; i < g.size(); ++i) (*gin[1])[i] -= g[i];
                            });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  auto x = a.data(), y = b.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  auto pa = a.impl_ptr(), pb = b.impl_ptr();
  return Tensor<T>::from_op(a.shape(), std::move(out), {a, b}, "mul",
                            [pa, pb](const auto&, std::span<const T> g,
                                     std::span<std::vector<T>*> gin) {
                              if (gin[0])
                                for (std::size_t i = 0; i < g.size(); ++i)
                                  (*gin[0])[i] += g[i] * pb->data[i];
                              if (gin[1])
                                for (std::size_t i = 0; i < g.size(); ++i)
                                  (*gin[1])[i] += g[i] * pa->data[i];
                            });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  return unary(
      a, "scale", [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& a, T value) {
  return unary(
      a, "add_scalar", [value](T v) { return v + value; }, [](T, T) { return T(1); });
}

template <class T>
Tensor<T> relu(const Tensor<T>& a) {
  return unary(
      a, "relu", [](T v) { return v > T(0) ? v : T(0); },
      [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <class T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope) {
  return unary(
      a, "leaky_relu", [slope](T v) { return v > T(0) ? v : slope * v; },
      [slope](T x, T) { return x > T(0) ? T(1) : slope; });
}

template <class T>
Tensor<T> tanh(const Tensor<T>& a) {
  static constexpr T kLimit = T(1) - std::numeric_limits<T>::epsilon();
  return unary(
      a, "tanh", [](T v) { return std::clamp(std::tanh(v), -kLimit, kLimit); },
      [](T, T y) { return T(1) - y * y; });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  static constexpr T kEps = std::numeric_limits<T>::epsilon();
  return unary(
      a, "sigmoid",
      [](T v) {
        // Split on sign so exp never overflows.
        const T s = v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
        return std::clamp(s, kEps, T(1) - kEps);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Tensor<T> square(const Tensor<T>& a) {
  return unary(
      a, "square", [](T v) { return v * v; }, [](T x, T) { return T(2) * x; });
}

template <class T>
Tensor<T> abs(const Tensor<T>& a) {
  return unary(
      a, "abs", [](T v) { return std::abs(v); },
      [](T x, T) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); });
}

template <class T>
Tensor<T> clamped_log(const Tensor<T>& a, T floor) {
  return unary(
      a, "clamped_log", [floor](T v) { return std::log(std::max(v, floor)); },
      [floor](T x, T) { return x > floor ? T(1) / x : T(0); });
}

template <class T>
Tensor<T> sum(const Tensor<T>& a) {
  auto x = a.data();
  double acc = 0.0;
  for (T v : x) acc += static_cast<double>(v);
  return Tensor<T>::from_op(Shape{}, {static_cast<T>(acc)}, {a}, "sum",
                            [](const auto&, std::span<const T> g, std::span<std::vector<T>*> gin) {
                              for (auto& v : *gin[0]) v += g[0];
                            });
}

template <class T>
Tensor<T> mean(const Tensor<T>& a) {
  auto x = a.data();
  double acc = 0.0;
  for (T v : x) acc += static_cast<double>(v);
  const double n = static_cast<double>(x.size());
  return Tensor<T>::from_op(Shape{}, {static_cast<T>(acc / n)}, {a}, "mean",
                            [n](const auto&, std::span<const T> g, std::span<std::vector<T>*> gin) {
                              const T share = static_cast<T>(static_cast<double>(g[0]) / n);
                              for (auto& v : *gin[0]) v += share;
                            });
}

template <class T>
Tensor<T> weighted_sum(std::span<const Tensor<T>> scalars, std::span<const double> weights) {
  if (scalars.size() != weights.size()) {
    throw DimensionError("weighted_sum: " + std::to_string(scalars.size()) + " terms but " +
                         std::to_string(weights.size()) + " weights");
  }
  double acc = 0.0;
  std::vector<Tensor<T>> inputs;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    acc += weights[i] * static_cast<double>(scalars[i].item());
    inputs.push_back(scalars[i]);
  }
  std::vector<double> w(weights.begin(), weights.end());
  return Tensor<T>::from_op(Shape{}, {static_cast<T>(acc)}, std::move(inputs), "weighted_sum",
                            [w](const auto&, std::span<const T> g, std::span<std::vector<T>*> gin) {
                              for (std::size_t i = 0; i < gin.size(); ++i)
                                if (gin[i]) (*gin[i])[0] += static_cast<T>(w[i]) * g[0];
                            });
}

template <class T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                         shape_str(shape));
  }
  std::vector<T> out(a.data().begin(), a.data().end());
  return Tensor<T>::from_op(std::move(shape), std::move(out), {a}, "reshape",
                            [](const auto&, std::span<const T> g, std::span<std::vector<T>*> gin) {
                              for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i];
                            });
}

template <class T>
Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0)) {
    throw DimensionError("concat_cols: incompatible " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const Index rows = a.dim(0), ca = a.dim(1), cb = b.dim(1), cols = ca + cb;
  std::vector<T> out(static_cast<std::size_t>(rows * cols));
  auto x = a.data(), y = b.data();
  for (Index r = 0; r < rows; ++r) {
    std::copy_n(x.begin() + r * ca, ca, out.begin() + r * cols);
    std::copy_n(y.begin() + r * cb, cb, out.begin() + r * cols + ca);
  }
  return Tensor<T>::from_op(
      Shape{rows, cols}, std::move(out), {a, b}, "concat_cols",
      [rows, ca, cb, cols](const auto&, std::span<const T> g, std::span<std::vector<T>*> gin) {
        for (Index r = 0; r < rows; ++r) {
          if (gin[0])
            for (Index j = 0; j < ca; ++j) (*gin[0])[r * ca + j] += g[r * cols + j];
          if (gin[1])
            for (Index j = 0; j < cb; ++j) (*gin[1])[r * cb + j] += g[r * cols + ca + j];
        }
      });
}

template <class T>
Tensor<T> slice_rows(const Tensor<T>& a, Index begin, Index end) {
  if (a.rank() < 1 || begin < 0 || end > a.dim(0) || begin >= end) {
    throw DimensionError("slice_rows: range [" + std::to_string(begin) + "," +
                         std::to_string(end) + ") invalid for " + shape_str(a.shape()));
  }
  const Index row = a.numel() / a.dim(0);
  Shape shape = a.shape();
  shape[0] = end - begin;
  std::vector<T> out(a.data().begin() + begin * row, a.data().begin() + end * row);
  return Tensor<T>::from_op(std::move(shape), std::move(out), {a}, "slice_rows",
                            [offset = begin * row](const auto&, std::span<const T> g,
                                                   std::span<std::vector<T>*> gin) {
                              for (std::size_t i = 0; i < g.size(); ++i)
                                (*gin[0])[offset + i] += g[i];
                            });
}

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: shape mismatch " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  const Index m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> out(static_cast<std::size_t>(m * n));
  gemm<T>(false, false, m, n, k, T(1), a.data().data(), k, b.data().data(), n, T(0), out.data(),
          n);
  auto pa = a.impl_ptr(), pb = b.impl_ptr();
  return Tensor<T>::from_op(Shape{m, n}, std::move(out), {a, b}, "matmul",
                            [pa, pb, m, k, n](const auto&, std::span<const T> g,
                                              std::span<std::vector<T>*> gin) {
                              if (gin[0])  // g · bᵀ
                                gemm<T>(false, true, m, k, n, T(1), g.data(), n, pb->data.data(),
                                        n, T(1), gin[0]->data(), k);
                              if (gin[1])  // aᵀ · g
                                gemm<T>(true, false, k, n, m, T(1), pa->data.data(), k, g.data(),
                                        n, T(1), gin[1]->data(), n);
                            });
}

template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (x.rank() != 2 || weight.rank() != 2 || bias.rank() != 1 || x.dim(1) != weight.dim(1) ||
      bias.dim(0) != weight.dim(0)) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + ", weight " +
                         shape_str(weight.shape()) + ", bias " + shape_str(bias.shape()));
  }
  const Index batch = x.dim(0), in = x.dim(1), out_dim = weight.dim(0);
  std::vector<T> out(static_cast<std::size_t>(batch * out_dim));
  auto bvals = bias.data();
  for (Index r = 0; r < batch; ++r) std::copy(bvals.begin(), bvals.end(), out.begin() + r * out_dim);
  gemm<T>(false, true, batch, out_dim, in, T(1), x.data().data(), in, weight.data().data(), in,
          T(1), out.data(), out_dim);
  auto px = x.impl_ptr(), pw = weight.impl_ptr();
  return Tensor<T>::from_op(
      Shape{batch, out_dim}, std::move(out), {x, weight, bias}, "linear",
      [px, pw, batch, in, out_dim](const auto&, std::span<const T> g,
                                   std::span<std::vector<T>*> gin) {
        if (gin[0])
          gemm<T>(false, false, batch, in, out_dim, T(1), g.data(), out_dim, pw->data.data(), in,
                  T(1), gin[0]->data(), in);
        if (gin[1])
          gemm<T>(true, false, out_dim, in, batch, T(1), g.data(), out_dim, px->data.data(), in,
                  T(1), gin[1]->data(), in);
        if (gin[2])
          for (Index r = 0; r < batch; ++r)
            for (Index j = 0; j < out_dim; ++j) (*gin[2])[j] += g[r * out_dim + j];
      });
}

#define ITGAN_INSTANTIATE(T)                                                                 \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> scale(const Tensor<T>&, T);                                             \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                        \
  template Tensor<T> relu(const Tensor<T>&);                                                 \
  template Tensor<T> leaky_relu(const Tensor<T>&, T);                                        \
  template Tensor<T> tanh(const Tensor<T>&);                                                 \
  template Tensor<T> sigmoid(const Tensor<T>&);                                              \
  template Tensor<T> square(const Tensor<T>&);                                               \
  template Tensor<T> abs(const Tensor<T>&);                                                  \
  template Tensor<T> clamped_log(const Tensor<T>&, T);                                       \
  template Tensor<T> sum(const Tensor<T>&);                                                  \
  template Tensor<T> mean(const Tensor<T>&);                                                 \
  template Tensor<T> weighted_sum(std::span<const Tensor<T>>, std::span<const double>);      \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                       \
  template Tensor<T> concat_cols(const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> slice_rows(const Tensor<T>&, Index, Index);                             \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);

ITGAN_INSTANTIATE(float)
ITGAN_INSTANTIATE(double)

#undef ITGAN_INSTANTIATE

}  // namespace itgan
