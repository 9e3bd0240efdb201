#include "itgan/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "blas.hpp"

namespace itgan {

namespace {
thread_local bool g_grad_enabled = true;
bool g_deterministic = false;
}  // namespace

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set_enabled(bool on) { g_grad_enabled = on; }

void set_deterministic(bool on) {
  g_deterministic = on;
  if (on) blas_set_threads(1);
}
bool deterministic() { return g_deterministic; }

Index shape_numel(const Shape& shape) {
  Index n = 1;
  for (Index e : shape) {
    if (e <= 0) throw DimensionError("non-positive extent in shape " + shape_str(shape));
    n *= e;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

template <class T>
Tensor<T>::Tensor(Shape shape, T fill) : impl_(std::make_shared<detail::TensorImpl<T>>()) {
  const Index n = shape_numel(shape);
  impl_->shape = std::move(shape);
  impl_->data.assign(static_cast<std::size_t>(n), fill);
}

template <class T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data)
    : impl_(std::make_shared<detail::TensorImpl<T>>()) {
  const Index n = shape_numel(shape);
  if (static_cast<Index>(data.size()) != n) {
    throw DimensionError("data length " + std::to_string(data.size()) + " does not match shape " +
                         shape_str(shape));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
}

template <class T>
const detail::TensorImpl<T>& Tensor<T>::impl() const {
  if (!impl_) throw StateError("use of an undefined tensor");
  return *impl_;
}

template <class T>
detail::TensorImpl<T>& Tensor<T>::impl() {
  if (!impl_) throw StateError("use of an undefined tensor");
  return *impl_;
}

template <class T>
T Tensor<T>::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return impl().data[0];
}

template <class T>
T Tensor<T>::at(std::initializer_list<Index> index) const {
  const auto& s = shape();
  if (index.size() != s.size()) throw DimensionError("index rank does not match " + shape_str(s));
  Index flat = 0;
  std::size_t axis = 0;
  for (Index i : index) {
    if (i < 0 || i >= s[axis]) throw DimensionError("index out of range for " + shape_str(s));
    flat = flat * s[axis] + i;
    ++axis;
  }
  return impl().data[static_cast<std::size_t>(flat)];
}

template <class T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
  if (!is_leaf()) throw StateError("requires_grad can only be set on leaf tensors");
  impl().requires_grad = on;
  return *this;
}

template <class T>
void Tensor<T>::zero_grad() {
  auto& g = impl().grad;
  std::fill(g.begin(), g.end(), T(0));
}

template <class T>
Tensor<T> Tensor<T>::detach() const {
  Tensor out;
  out.impl_ = std::make_shared<detail::TensorImpl<T>>();
  out.impl_->shape = shape();
  // Storage is not aliased: the graph may still hold a reference to the
  // original buffer and an in-place update must not reach it.
  out.impl_->data = impl().data;
  return out;
}

template <class T>
Tensor<T> Tensor<T>::clone() const {
  Tensor out = detach();
  out.impl_->requires_grad = impl().requires_grad;
  return out;
}

template <class T>
Tensor<T> Tensor<T>::from_op(Shape shape, std::vector<T> data, std::vector<Tensor> inputs,
                             std::string name, detail::BackwardFn<T> backward) {
  Tensor out(std::move(shape), std::move(data));
  if (!GradMode::enabled()) return out;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.requires_grad(); });
  if (!any) return out;
  auto fn = std::make_shared<detail::GradFn<T>>();
  fn->name = std::move(name);
  fn->inputs.reserve(inputs.size());
  for (auto& t : inputs) fn->inputs.push_back(t.impl_);
  fn->apply = std::move(backward);
  out.impl_->requires_grad = true;
  out.impl_->grad_fn = std::move(fn);
  return out;
}

template <class T>
void Tensor<T>::backward() const {
  if (numel() != 1) {
    throw ArgumentError("backward() needs a scalar loss, got shape " + shape_str(shape()));
  }
  if (!requires_grad()) throw ArgumentError("backward() on a tensor outside the tape");

  using Impl = detail::TensorImpl<T>;
  if (!impl_->grad_fn) {  // leaf: d x / d x
    if (impl_->grad.size() != 1) impl_->grad.assign(1, T(0));
    impl_->grad[0] += T(1);
    return;
  }
  // Topological order: every op after its inputs.
  std::vector<Impl*> order;
  std::unordered_set<Impl*> visited;
  std::vector<std::pair<Impl*, std::size_t>> stack{{impl_.get(), 0}};
  visited.insert(impl_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    const auto* fn = node->grad_fn.get();
    if (fn && next < fn->inputs.size()) {
      Impl* child = fn->inputs[next++].get();
      if (child->grad_fn && visited.insert(child).second) stack.emplace_back(child, 0);
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }

  std::unordered_map<Impl*, std::vector<T>> grads;
  grads[impl_.get()].assign(1, T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Impl* node = *it;
    auto found = grads.find(node);
    if (found == grads.end()) continue;
    std::vector<T> grad_out = std::move(found->second);
    grads.erase(found);

    const auto& fn = *node->grad_fn;
    std::vector<std::vector<T>*> grad_in(fn.inputs.size(), nullptr);
    for (std::size_t i = 0; i < fn.inputs.size(); ++i) {
      Impl* in = fn.inputs[i].get();
      if (!in->requires_grad) continue;
      std::vector<T>& buf = in->grad_fn ? grads[in] : in->grad;
      if (buf.size() != in->data.size()) buf.assign(in->data.size(), T(0));
      grad_in[i] = &buf;
    }
    fn.apply(*node, grad_out, grad_in);
  }
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace itgan
