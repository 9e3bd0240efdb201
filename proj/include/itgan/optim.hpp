#pragma once

#include <string>
#include <vector>

#include "itgan/nn.hpp"

namespace itgan {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
  bool operator==(const AdamConfig&) const = default;
};

/// Adam with bias correction over a fixed, named parameter list.
template <class T>
class Adam {
 public:
  Adam() = default;
  Adam(NamedTensors<T> params, AdamConfig config);

  /// One update. Every parameter must carry a gradient.
  void step();
  void zero_grad();

  long steps() const { return step_; }
  const AdamConfig& config() const { return config_; }
  const NamedTensors<T>& params() const { return params_; }

  // Moment buffers, exposed for checkpointing. Same order as params().
  std::vector<std::vector<T>>& first_moments() { return m_; }
  std::vector<std::vector<T>>& second_moments() { return v_; }
  const std::vector<std::vector<T>>& first_moments() const { return m_; }
  const std::vector<std::vector<T>>& second_moments() const { return v_; }
  void set_steps(long s) { step_ = s; }

 private:
  NamedTensors<T> params_;
  AdamConfig config_;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
  long step_ = 0;
};

}  // namespace itgan
