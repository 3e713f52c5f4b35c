#ifndef SITTA_NN_OPTIM_HPP_
#define SITTA_NN_OPTIM_HPP_

#include <cmath>
#include <vector>

#include "sitta/nn/layers.hpp"

namespace sitta::nn {

template <typename Scalar>
void zero_grad(const std::vector<Parameter<Scalar>*>& params) {
  for (auto* p : params) p->grad.setZero();
}

/// Plain SGD: no momentum, no weight decay.
template <typename Scalar>
void sgd_step(const std::vector<Parameter<Scalar>*>& params, double lr) {
  for (auto* p : params) p->value -= static_cast<Scalar>(lr) * p->grad;
}

template <typename Scalar>
bool grads_finite(const std::vector<Parameter<Scalar>*>& params) {
  for (auto* p : params) {
    if (!p->grad.isFinite().all()) return false;
  }
  return true;
}

/// Adam with decoupled weight decay.
template <typename Scalar>
class AdamW {
 public:
  explicit AdamW(std::vector<Parameter<Scalar>*> params, double lr = 1e-3,
                 double weight_decay = 1e-2, double beta1 = 0.9,
                 double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), wd_(weight_decay), b1_(beta1),
        b2_(beta2), eps_(eps) {
    for (auto* p : params_) {
      m_.push_back(ArrayX<Scalar>::Zero(p->size()));
      v_.push_back(ArrayX<Scalar>::Zero(p->size()));
    }
  }

  void set_lr(double lr) { lr_ = lr; }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, t_);
    const double c2 = 1.0 - std::pow(b2_, t_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = *params_[i];
      m_[i] = static_cast<Scalar>(b1_) * m_[i] + static_cast<Scalar>(1 - b1_) * p.grad;
      v_[i] = static_cast<Scalar>(b2_) * v_[i] + static_cast<Scalar>(1 - b2_) * p.grad.square();
      if (wd_ > 0 && !p.norm_affine) p.value *= static_cast<Scalar>(1 - lr_ * wd_);
      const ArrayX<Scalar> mhat = m_[i] / static_cast<Scalar>(c1);
      const ArrayX<Scalar> vhat = v_[i] / static_cast<Scalar>(c2);
      p.value -= static_cast<Scalar>(lr_) * mhat / (vhat.sqrt() + static_cast<Scalar>(eps_));
    }
  }

  void zero_grad() { nn::zero_grad(params_); }

 private:
  std::vector<Parameter<Scalar>*> params_;
  std::vector<ArrayX<Scalar>> m_, v_;
  double lr_, wd_, b1_, b2_, eps_;
  int t_ = 0;
};

}  // namespace sitta::nn

#endif  // SITTA_NN_OPTIM_HPP_
