#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "itgan/tensor.hpp"

namespace itgan {

inline constexpr int kLatentDim = 100;
inline constexpr int kSharedDim = 1024;
inline constexpr int kClassifierHidden = 128;
inline constexpr int kKernel = 5;
inline constexpr double kLeakySlope = 0.2;
inline constexpr double kInitStddev = 0.02;

/// Architecture hyperparameters. Channel widths are the full-size widths
/// scaled by `width`.
struct ArchConfig {
  int image_size = 128;
  int attr_count = 40;
  int z_dim = kLatentDim;
  double width = 1.0;

  int base() const { return image_size / 16; }
  int channels(int full) const;
  void validate() const;
  bool operator==(const ArchConfig&) const = default;
};

template <class T>
using NamedTensors = std::vector<std::pair<std::string, Tensor<T>>>;

template <class T>
struct Linear {
  Tensor<T> weight;  // [out, in]
  Tensor<T> bias;    // [out]
  Tensor<T> operator()(const Tensor<T>& x) const { return linear(x, weight, bias); }
};

template <class T>
struct ConvLayer {
  Tensor<T> kernel;
  Tensor<T> bias;
};

template <class T>
struct BatchNorm {
  Tensor<T> gamma;
  Tensor<T> beta;
  RunningStats<T> stats;
  Tensor<T> operator()(const Tensor<T>& x, Mode mode) {
    return batchnorm2d(x, gamma, beta, stats, mode);
  }
};

/// G(z, c): projection to base×base×C, then four stride-2 transposed convs.
template <class T>
struct Generator {
  ArchConfig arch;
  Linear<T> project;
  BatchNorm<T> project_norm;
  std::array<ConvLayer<T>, 4> deconv;
  std::array<BatchNorm<T>, 3> norm;

  Tensor<T> forward(const Tensor<T>& z, const Tensor<T>& c, Mode mode);
  NamedTensors<T> parameters() const;
  NamedTensors<T> buffers() const;
};

template <class T>
struct DiscriminatorOutput {
  Tensor<T> source;             // [B,1] probability that x is real
  Tensor<T> shared;             // [B,1024]
  std::array<Tensor<T>, 4> hidden;  // post-activation conv maps h⁰..h³
};

template <class T>
struct Discriminator {
  ArchConfig arch;
  std::array<ConvLayer<T>, 4> conv;
  std::array<BatchNorm<T>, 3> norm;  // stages 1..3; stage 0 is unnormalised
  Linear<T> shared;
  Linear<T> source;

  DiscriminatorOutput<T> forward(const Tensor<T>& x, Mode mode);
  NamedTensors<T> parameters() const;
  NamedTensors<T> buffers() const;
};

template <class T>
struct Encoding {
  Tensor<T> z;  // [B,100] in (−1,1)
  Tensor<T> c;  // [B,d] in (0,1)
};

template <class T>
struct Classifier {
  ArchConfig arch;
  Linear<T> hidden;
  Linear<T> z_head;
  Linear<T> c_head;

  Encoding<T> forward(const Tensor<T>& shared) const;
  NamedTensors<T> parameters() const;
};

/// Parameters of all three networks plus their architecture and the
/// attribute names that index c.
template <class T>
struct ModelBundle {
  ArchConfig arch;
  std::vector<std::string> attributes;
  Generator<T> generator;
  Discriminator<T> discriminator;
  Classifier<T> classifier;

  /// Everything that is saved: "g.", "d.", "c." prefixed parameters then buffers.
  NamedTensors<T> state() const;
  ModelBundle clone() const;
};

using Bundle = ModelBundle<float>;

/// Weights ~ N(0, 0.02), biases 0, γ = 1, β = 0, running mean 0 / var 1.
template <class T>
ModelBundle<T> init_params(const ArchConfig& arch, std::vector<std::string> attributes,
                           std::uint64_t seed);

/// x → D → C in the given mode.
template <class T>
Encoding<T> encode(ModelBundle<T>& bundle, const Tensor<T>& x, Mode mode);

/// Encode then decode with the encoded code; the reconstruction path.
template <class T>
Tensor<T> rebuild(ModelBundle<T>& bundle, const Tensor<T>& x, Mode mode);

/// Copies values from one bundle into another of identical layout.
template <class T>
void copy_state(const ModelBundle<T>& from, ModelBundle<T>& to);

/// Same parameters at another scalar precision (float training ↔ double checks).
template <class To, class From>
ModelBundle<To> convert_precision(const ModelBundle<From>& from);

}  // namespace itgan
