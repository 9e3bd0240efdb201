#include "itgan/optim.hpp"

#include <cmath>

#include "itgan/errors.hpp"

namespace itgan {

void AdamConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ArgumentError("lr must be positive, got " + std::to_string(lr));
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ArgumentError("beta1 must be in [0,1), got " + std::to_string(beta1));
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ArgumentError("beta2 must be in [0,1), got " + std::to_string(beta2));
  if (!(eps > 0.0)) throw ArgumentError("eps must be positive");
}

template <class T>
Adam<T>::Adam(NamedTensors<T> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  for (auto& [name, p] : params_) {
    m_.emplace_back(p.data().size(), T(0));
    v_.emplace_back(p.data().size(), T(0));
  }
}

template <class T>
void Adam<T>::step() {
  for (auto& [name, p] : params_) {
    if (!p.has_grad()) throw StateError("adam: parameter " + name + " has no gradient");
  }
  ++step_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto data = params_[k].second.data();
    auto grad = params_[k].second.grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double g = grad[i];
      const double mi = b1 * m[i] + (1.0 - b1) * g;
      const double vi = b2 * v[i] + (1.0 - b2) * g * g;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      data[i] -= static_cast<T>(config_.lr * (mi / c1) / (std::sqrt(vi / c2) + config_.eps));
    }
  }
}

template <class T>
void Adam<T>::zero_grad() {
  for (auto& [name, p] : params_) p.zero_grad();
}

template class Adam<float>;
template class Adam<double>;

}  // namespace itgan
