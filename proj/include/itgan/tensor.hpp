#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "itgan/errors.hpp"

namespace itgan {

using Index = std::int64_t;
using Shape = std::vector<Index>;

Index shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <class T>
class Tensor;

namespace detail {

template <class T>
struct TensorImpl;

// Backward rule of one recorded operation. grad_in[i] is null when input i
// does not take part in differentiation; otherwise it is a buffer of the
// input's size that the rule accumulates into.
template <class T>
using BackwardFn = std::function<void(const TensorImpl<T>& out, std::span<const T> grad_out,
                                      std::span<std::vector<T>*> grad_in)>;

template <class T>
struct GradFn {
  std::string name;
  std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
  BackwardFn<T> apply;
};

template <class T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  std::shared_ptr<GradFn<T>> grad_fn;
};

}  // namespace detail

/// Thread-local switch for recording operations. Inference paths disable it.
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool on);
};

/// RAII guard that disables recording for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(previous_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Forces a fixed summation order in the BLAS backend (single thread).
void set_deterministic(bool on);
bool deterministic();

/// Dense row-major tensor with shared storage. Copies are handles to the same
/// storage; use clone() for a deep copy.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), T(0)); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), T(1)); }
  static Tensor scalar(T value) { return Tensor(Shape{}, std::vector<T>{value}); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl().shape; }
  Index dim(std::size_t axis) const { return impl().shape.at(axis); }
  std::size_t rank() const { return impl().shape.size(); }
  Index numel() const { return static_cast<Index>(impl().data.size()); }

  std::span<T> data() { return impl().data; }
  std::span<const T> data() const { return impl().data; }
  T item() const;
  T at(std::initializer_list<Index> index) const;

  bool requires_grad() const { return impl().requires_grad; }
  Tensor& set_requires_grad(bool on);
  bool is_leaf() const { return impl().grad_fn == nullptr; }
  bool has_grad() const { return !impl().grad.empty(); }
  std::span<const T> grad() const { return impl().grad; }
  std::span<T> mutable_grad() { return impl().grad; }
  void zero_grad();

  /// Copy of the values, cut from the graph.
  Tensor detach() const;
  /// Deep copy as a new leaf with the same requires_grad flag.
  Tensor clone() const;
  /// Reverse-mode sweep from this scalar. Leaf gradients accumulate.
  void backward() const;

  const detail::TensorImpl<T>& impl() const;
  detail::TensorImpl<T>& impl();
  const std::shared_ptr<detail::TensorImpl<T>>& impl_ptr() const { return impl_; }

  static Tensor from_op(Shape shape, std::vector<T> data, std::vector<Tensor> inputs,
                        std::string name, detail::BackwardFn<T> backward);

 private:
  std::shared_ptr<detail::TensorImpl<T>> impl_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

// ---- linear algebra --------------------------------------------------------

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// x[B,in] · weightᵀ + bias with weight[out,in], bias[out].
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

// ---- elementwise -----------------------------------------------------------

template <class T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <class T> Tensor<T> add_scalar(const Tensor<T>& a, T value);
template <class T> Tensor<T> relu(const Tensor<T>& a);
template <class T> Tensor<T> leaky_relu(const Tensor<T>& a, T slope);
/// tanh, clamped to ±(1 - machine epsilon) so the range stays open.
template <class T> Tensor<T> tanh(const Tensor<T>& a);
/// Logistic sigmoid, clamped to [eps, 1 - eps].
template <class T> Tensor<T> sigmoid(const Tensor<T>& a);
template <class T> Tensor<T> square(const Tensor<T>& a);
template <class T> Tensor<T> abs(const Tensor<T>& a);
/// Natural log of max(a, floor). Gradient is zero where the floor applies.
template <class T> Tensor<T> clamped_log(const Tensor<T>& a, T floor);

// ---- reductions and shape --------------------------------------------------

template <class T> Tensor<T> sum(const Tensor<T>& a);
template <class T> Tensor<T> mean(const Tensor<T>& a);
/// Σ wᵢ·xᵢ over scalars, accumulated in double and rounded once.
template <class T>
Tensor<T> weighted_sum(std::span<const Tensor<T>> scalars, std::span<const double> weights);
template <class T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);
/// Concatenates 2-D tensors along columns.
template <class T> Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b);
/// Contiguous row range [begin, end) of the leading axis.
template <class T> Tensor<T> slice_rows(const Tensor<T>& a, Index begin, Index end);

// ---- convolution -----------------------------------------------------------

struct Pair {
  Index h = 1;
  Index w = 1;
};

/// Cross-correlation. input[B,Cin,H,W], kernel[Cout,Cin,kH,kW], bias[Cout].
template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                 Pair stride, Pair padding);

/// Adjoint of conv2d w.r.t. its input. kernel[Cin,Cout,kH,kW]; output_size
/// picks one size inside the stride ambiguity window.
template <class T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& kernel,
                           const Tensor<T>& bias, Pair stride, Pair padding, Pair output_size);

Index conv_output_extent(Index in, Index kernel, Index stride, Index pad);

// ---- normalisation ---------------------------------------------------------

enum class Mode { Train, Eval };

template <class T>
struct RunningStats {
  Tensor<T> mean;
  Tensor<T> var;
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

/// Per-channel normalisation of input[B,C,H,W]. Train mode uses batch
/// statistics and folds them into `stats` (running = 0.9·running + 0.1·batch).
template <class T>
Tensor<T> batchnorm2d(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                      RunningStats<T>& stats, Mode mode);

// ---- dense kernels shared with the ops -------------------------------------

/// C[M,N] = alpha·op(A)·op(B) + beta·C, row-major.
template <class T>
void gemm(bool trans_a, bool trans_b, Index m, Index n, Index k, T alpha, const T* a,
          Index lda, const T* b, Index ldb, T beta, T* c, Index ldc);

}  // namespace itgan
