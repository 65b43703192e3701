#pragma once

// Adam with bias correction. The optimizer reads gradients and updates
// parameter values in place; it never touches the gradients themselves.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "cscnet/tensor.hpp"

namespace cscnet {

struct AdamHyperparams {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class Real>
class Adam {
 public:
  Adam(std::vector<TensorPtr<Real>> params, AdamHyperparams hp = {})
      : params_(std::move(params)), hp_(hp) {
    moments1_.reserve(params_.size());
    moments2_.reserve(params_.size());
    for (const auto& p : params_) {
      moments1_.emplace_back(p->numel(), Real(0));
      moments2_.emplace_back(p->numel(), Real(0));
    }
  }

  std::int64_t step_count() const { return step_; }
  const AdamHyperparams& hyperparams() const { return hp_; }

  void zero_grads() {
    for (const auto& p : params_) p->zero_grad();
  }

  void step() {
    ++step_;
    const double c1 = 1.0 - std::pow(hp_.beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(hp_.beta2, static_cast<double>(step_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Tensor<Real>& p = *params_[k];
      if (p.numel() != moments1_[k].size()) {
        throw std::runtime_error("adam: parameter " + std::to_string(k) + " has " +
                                 std::to_string(p.numel()) + " entries but state has " +
                                 std::to_string(moments1_[k].size()));
      }
      for (std::size_t i = 0; i < p.numel(); ++i) {
        const double g = static_cast<double>(p.grad[i]);
        double m = static_cast<double>(moments1_[k][i]);
        double v = static_cast<double>(moments2_[k][i]);
        m = hp_.beta1 * m + (1.0 - hp_.beta1) * g;
        v = hp_.beta2 * v + (1.0 - hp_.beta2) * g * g;
        moments1_[k][i] = static_cast<Real>(m);
        moments2_[k][i] = static_cast<Real>(v);
        const double m_hat = m / c1;
        const double v_hat = v / c2;
        p.values[i] -= static_cast<Real>(hp_.lr * m_hat / (std::sqrt(v_hat) + hp_.eps));
      }
    }
  }

 private:
  std::vector<TensorPtr<Real>> params_;
  AdamHyperparams hp_;
  std::vector<std::vector<Real>> moments1_;
  std::vector<std::vector<Real>> moments2_;
  std::int64_t step_ = 0;
};

}  // namespace cscnet
