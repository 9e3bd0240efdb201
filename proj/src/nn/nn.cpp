#include "itgan/nn.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace itgan {

int ArchConfig::channels(int full) const {
  return std::max(1, static_cast<int>(std::lround(full * width)));
}

void ArchConfig::validate() const {
  if (image_size <= 0 || image_size % 16 != 0) {
    throw ArgumentError("image_size must be a positive multiple of 16, got " +
                        std::to_string(image_size));
  }
  if (attr_count < 1) throw ArgumentError("attr_count must be >= 1");
  if (z_dim != kLatentDim) throw ArgumentError("z_dim is fixed at 100");
  if (!(width > 0.0)) throw ArgumentError("width multiplier must be positive");
}

namespace {

constexpr std::array<int, 4> kGeneratorWidths = {256, 128, 64, 3};
constexpr int kProjectionWidth = 512;
constexpr std::array<int, 4> kDiscriminatorWidths = {64, 128, 256, 512};

template <class T>
using Slots = std::vector<std::pair<std::string, Tensor<T>*>>;

template <class T>
void add_linear(Slots<T>& s, const std::string& name, Linear<T>& l) {
  s.emplace_back(name + ".weight", &l.weight);
  s.emplace_back(name + ".bias", &l.bias);
}

template <class T>
void add_conv(Slots<T>& s, const std::string& name, ConvLayer<T>& l) {
  s.emplace_back(name + ".kernel", &l.kernel);
  s.emplace_back(name + ".bias", &l.bias);
}

template <class T>
void add_norm(Slots<T>& s, const std::string& name, BatchNorm<T>& n) {
  s.emplace_back(name + ".gamma", &n.gamma);
  s.emplace_back(name + ".beta", &n.beta);
}

template <class T>
void add_stats(Slots<T>& s, const std::string& name, BatchNorm<T>& n) {
  s.emplace_back(name + ".running_mean", &n.stats.mean);
  s.emplace_back(name + ".running_var", &n.stats.var);
}

template <class T>
Slots<T> param_slots(Generator<T>& g) {
  Slots<T> s;
  add_linear(s, "project", g.project);
  add_norm(s, "project_norm", g.project_norm);
  for (std::size_t i = 0; i < 4; ++i) add_conv(s, "deconv" + std::to_string(i), g.deconv[i]);
  for (std::size_t i = 0; i < 3; ++i) add_norm(s, "norm" + std::to_string(i), g.norm[i]);
  return s;
}

template <class T>
Slots<T> buffer_slots(Generator<T>& g) {
  Slots<T> s;
  add_stats(s, "project_norm", g.project_norm);
  for (std::size_t i = 0; i < 3; ++i) add_stats(s, "norm" + std::to_string(i), g.norm[i]);
  return s;
}

template <class T>
Slots<T> param_slots(Discriminator<T>& d) {
  Slots<T> s;
  for (std::size_t i = 0; i < 4; ++i) add_conv(s, "conv" + std::to_string(i), d.conv[i]);
  for (std::size_t i = 0; i < 3; ++i) add_norm(s, "norm" + std::to_string(i + 1), d.norm[i]);
  add_linear(s, "shared", d.shared);
  add_linear(s, "source", d.source);
  return s;
}

template <class T>
Slots<T> buffer_slots(Discriminator<T>& d) {
  Slots<T> s;
  for (std::size_t i = 0; i < 3; ++i) add_stats(s, "norm" + std::to_string(i + 1), d.norm[i]);
  return s;
}

template <class T>
Slots<T> param_slots(Classifier<T>& c) {
  Slots<T> s;
  add_linear(s, "hidden", c.hidden);
  add_linear(s, "z_head", c.z_head);
  add_linear(s, "c_head", c.c_head);
  return s;
}

template <class T>
Slots<T> all_slots(ModelBundle<T>& b) {
  Slots<T> s;
  auto append = [&s](const std::string& prefix, Slots<T> part) {
    for (auto& [name, ptr] : part) s.emplace_back(prefix + name, ptr);
  };
  append("g.", param_slots(b.generator));
  append("d.", param_slots(b.discriminator));
  append("c.", param_slots(b.classifier));
  append("g.", buffer_slots(b.generator));
  append("d.", buffer_slots(b.discriminator));
  return s;
}

template <class T>
NamedTensors<T> handles(const Slots<T>& slots) {
  NamedTensors<T> out;
  out.reserve(slots.size());
  for (const auto& [name, ptr] : slots) out.emplace_back(name, *ptr);
  return out;
}

class ParamFactory {
 public:
  explicit ParamFactory(std::uint64_t seed) : rng_(seed) {}

  template <class T>
  Tensor<T> normal(Shape shape) {
    std::normal_distribution<double> dist(0.0, kInitStddev);
    std::vector<T> v(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& x : v) x = static_cast<T>(dist(rng_));
    return param(Tensor<T>(std::move(shape), std::move(v)));
  }

  template <class T>
  Tensor<T> constant(Shape shape, T value) {
    return param(Tensor<T>(std::move(shape), value));
  }

  template <class T>
  Linear<T> linear(Index in, Index out) {
    return {normal<T>({out, in}), constant<T>({out}, T(0))};
  }

  template <class T>
  ConvLayer<T> conv(Shape kernel_shape, Index bias_len) {
    return {normal<T>(std::move(kernel_shape)), constant<T>({bias_len}, T(0))};
  }

  template <class T>
  BatchNorm<T> norm(Index channels) {
    return {constant<T>({channels}, T(1)), constant<T>({channels}, T(0)),
            {Tensor<T>({channels}, T(0)), Tensor<T>({channels}, T(1))}};
  }

 private:
  template <class T>
  static Tensor<T> param(Tensor<T> t) {
    t.set_requires_grad(true);
    return t;
  }

  std::mt19937_64 rng_;
};

template <class T>
void check_batch_rows(const Tensor<T>& t, Index cols, const char* what) {
  if (t.rank() != 2 || t.dim(1) != cols) {
    throw DimensionError(std::string(what) + " must be [B," + std::to_string(cols) + "], got " +
                         shape_str(t.shape()));
  }
}

}  // namespace

template <class T>
Tensor<T> Generator<T>::forward(const Tensor<T>& z, const Tensor<T>& c, Mode mode) {
  check_batch_rows(z, arch.z_dim, "z");
  check_batch_rows(c, arch.attr_count, "c");
  if (z.dim(0) != c.dim(0)) throw DimensionError("z and c batch sizes differ");
  const Index batch = z.dim(0), base = arch.base();
  auto h = project(concat_cols(z, c));
  h = reshape(h, Shape{batch, arch.channels(kProjectionWidth), base, base});
  h = relu(project_norm(h, mode));
  Index side = base;
  for (std::size_t i = 0; i < 4; ++i) {
    side *= 2;
    h = conv_transpose2d(h, deconv[i].kernel, deconv[i].bias, {2, 2}, {2, 2}, {side, side});
    h = i < 3 ? relu(norm[i](h, mode)) : itgan::tanh(h);
  }
  return h;
}

template <class T>
NamedTensors<T> Generator<T>::parameters() const {
  return handles(param_slots(const_cast<Generator&>(*this)));
}

template <class T>
NamedTensors<T> Generator<T>::buffers() const {
  return handles(buffer_slots(const_cast<Generator&>(*this)));
}

template <class T>
DiscriminatorOutput<T> Discriminator<T>::forward(const Tensor<T>& x, Mode mode) {
  const Index s = arch.image_size;
  if (x.rank() != 4 || x.dim(1) != 3 || x.dim(2) != s || x.dim(3) != s) {
    throw DimensionError("discriminator input must be [B,3," + std::to_string(s) + "," +
                         std::to_string(s) + "], got " + shape_str(x.shape()));
  }
  const T slope = static_cast<T>(kLeakySlope);
  DiscriminatorOutput<T> out;
  Tensor<T> h = x;
  for (std::size_t i = 0; i < 4; ++i) {
    h = conv2d(h, conv[i].kernel, conv[i].bias, {2, 2}, {2, 2});
    if (i > 0) h = norm[i - 1](h, mode);
    h = leaky_relu(h, slope);
    out.hidden[i] = h;
  }
  auto flat = reshape(h, Shape{x.dim(0), h.numel() / x.dim(0)});
  out.shared = leaky_relu(shared(flat), slope);
  out.source = sigmoid(source(flat));
  return out;
}

template <class T>
NamedTensors<T> Discriminator<T>::parameters() const {
  return handles(param_slots(const_cast<Discriminator&>(*this)));
}

template <class T>
NamedTensors<T> Discriminator<T>::buffers() const {
  return handles(buffer_slots(const_cast<Discriminator&>(*this)));
}

template <class T>
Encoding<T> Classifier<T>::forward(const Tensor<T>& shared_features) const {
  check_batch_rows(shared_features, kSharedDim, "shared features");
  auto h = leaky_relu(hidden(shared_features), static_cast<T>(kLeakySlope));
  return {itgan::tanh(z_head(h)), sigmoid(c_head(h))};
}

template <class T>
NamedTensors<T> Classifier<T>::parameters() const {
  return handles(param_slots(const_cast<Classifier&>(*this)));
}

template <class T>
NamedTensors<T> ModelBundle<T>::state() const {
  return handles(all_slots(const_cast<ModelBundle&>(*this)));
}

template <class T>
ModelBundle<T> ModelBundle<T>::clone() const {
  ModelBundle out = *this;
  for (auto& [name, slot] : all_slots(out)) *slot = slot->clone();
  return out;
}

template <class T>
void copy_state(const ModelBundle<T>& from, ModelBundle<T>& to) {
  auto src = from.state();
  auto dst = all_slots(to);
  if (src.size() != dst.size()) throw DimensionError("bundle layouts differ");
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i].second.shape() != dst[i].second->shape()) {
      throw DimensionError("bundle tensor " + src[i].first + " differs in shape");
    }
    auto s = src[i].second.data();
    std::copy(s.begin(), s.end(), dst[i].second->data().begin());
  }
}

template <class T>
ModelBundle<T> init_params(const ArchConfig& arch, std::vector<std::string> attributes,
                           std::uint64_t seed) {
  arch.validate();
  if (static_cast<int>(attributes.size()) != arch.attr_count) {
    throw ArgumentError("expected " + std::to_string(arch.attr_count) + " attribute names, got " +
                        std::to_string(attributes.size()));
  }
  ParamFactory f(seed);
  ModelBundle<T> b;
  b.arch = arch;
  b.attributes = std::move(attributes);
  const Index base = arch.base();

  auto& g = b.generator;
  g.arch = arch;
  const Index proj = arch.channels(kProjectionWidth);
  g.project = f.linear<T>(arch.z_dim + arch.attr_count, base * base * proj);
  g.project_norm = f.norm<T>(proj);
  Index in = proj;
  for (std::size_t i = 0; i < 4; ++i) {
    const Index out = i == 3 ? 3 : arch.channels(kGeneratorWidths[i]);
    g.deconv[i] = f.conv<T>({in, out, kKernel, kKernel}, out);
    if (i < 3) g.norm[i] = f.norm<T>(out);
    in = out;
  }

  auto& d = b.discriminator;
  d.arch = arch;
  in = 3;
  for (std::size_t i = 0; i < 4; ++i) {
    const Index out = arch.channels(kDiscriminatorWidths[i]);
    d.conv[i] = f.conv<T>({out, in, kKernel, kKernel}, out);
    if (i > 0) d.norm[i - 1] = f.norm<T>(out);
    in = out;
  }
  const Index flat = in * base * base;
  d.shared = f.linear<T>(flat, kSharedDim);
  d.source = f.linear<T>(flat, 1);

  auto& c = b.classifier;
  c.arch = arch;
  c.hidden = f.linear<T>(kSharedDim, kClassifierHidden);
  c.z_head = f.linear<T>(kClassifierHidden, arch.z_dim);
  c.c_head = f.linear<T>(kClassifierHidden, arch.attr_count);
  return b;
}

template <class T>
Encoding<T> encode(ModelBundle<T>& bundle, const Tensor<T>& x, Mode mode) {
  return bundle.classifier.forward(bundle.discriminator.forward(x, mode).shared);
}

template <class T>
Tensor<T> rebuild(ModelBundle<T>& bundle, const Tensor<T>& x, Mode mode) {
  auto code = encode(bundle, x, mode);
  return bundle.generator.forward(code.z, code.c, mode);
}

template <class To, class From>
ModelBundle<To> convert_precision(const ModelBundle<From>& from) {
  auto out = init_params<To>(from.arch, from.attributes, 0);
  auto src = from.state();
  auto dst = all_slots(out);
  for (std::size_t i = 0; i < src.size(); ++i) {
    auto s = src[i].second.data();
    auto d = dst[i].second->data();
    std::transform(s.begin(), s.end(), d.begin(), [](From v) { return static_cast<To>(v); });
  }
  return out;
}

template ModelBundle<double> convert_precision(const ModelBundle<float>&);
template ModelBundle<float> convert_precision(const ModelBundle<double>&);

#define ITGAN_INSTANTIATE(T)                                                                   \
  template struct Generator<T>;                                                                \
  template struct Discriminator<T>;                                                            \
  template struct Classifier<T>;                                                               \
  template struct ModelBundle<T>;                                                              \
  template ModelBundle<T> init_params(const ArchConfig&, std::vector<std::string>,             \
                                      std::uint64_t);                                          \
  template Encoding<T> encode(ModelBundle<T>&, const Tensor<T>&, Mode);                        \
  template Tensor<T> rebuild(ModelBundle<T>&, const Tensor<T>&, Mode);                         \
  template void copy_state(const ModelBundle<T>&, ModelBundle<T>&);

ITGAN_INSTANTIATE(float)
ITGAN_INSTANTIATE(double)

#undef ITGAN_INSTANTIATE

}  // namespace itgan
