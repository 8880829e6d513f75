#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace lvbnn {

/// Adam with the standard moment decay constants. Operates on a flat
/// parameter vector; callers flatten/unflatten their own structures.
class Adam {
 public:
  Adam(std::size_t dim, double step_size, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8)
      : step_size_(step_size), beta1_(beta1), beta2_(beta2), eps_(eps),
        m_(dim, 0.0), v_(dim, 0.0) {}

  void update(std::vector<double>& params, const std::vector<double>& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i] * grads[i];
      params[i] -= step_size_ * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + eps_);
    }
  }

 private:
  double step_size_, beta1_, beta2_, eps_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

}  // namespace lvbnn
