#ifndef SITTA_LOSSES_HPP_
#define SITTA_LOSSES_HPP_

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "sitta/ops.hpp"
#include "sitta/tensor.hpp"

/**
 * The four objectives optimized at test time. Every loss works on a single
 * 1xCxHxW probability mask and returns its value together with the gradient
 * with respect to that mask; compose with softmax_backward() for logits.
 * Targets are treated as constants.
 */
namespace sitta::losses {

/// Probabilities are clamped to [kProbFloor, 1] inside logarithms.
inline constexpr double kProbFloor = 1e-8;
/// Smoothing term of the soft IoU.
inline constexpr double kIouSmoothing = 1.0;

template <typename Scalar>
struct LossValue {
  Scalar value = 0;
  Tensor<Scalar> grad;
};

/// H x W reliability weights in {0, 1}.
template <typename Scalar>
using PixelWeights = RowMatrix<Scalar>;

namespace detail {

template <typename Scalar>
void check_pair(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* who) {
  if (!a.same_shape(b) || a.n() != 1) {
    throw std::invalid_argument(std::string(who) + ": shape mismatch (" +
                                a.shape_string() + " vs " + b.shape_string() + ")");
  }
}

template <typename Scalar>
PixelWeights<Scalar> resolve_weights(const Tensor<Scalar>& probs,
                                     const PixelWeights<Scalar>* weights,
                                     const char* who) {
  if (weights == nullptr) {
    return PixelWeights<Scalar>::Ones(probs.h(), probs.w());
  }
  if (weights->rows() != probs.h() || weights->cols() != probs.w()) {
    throw std::invalid_argument(std::string(who) + ": weight mask shape mismatch");
  }
  return *weights;
}

template <typename Scalar>
Scalar log_floor(Scalar p) {
  return std::log(std::max(p, static_cast<Scalar>(kProbFloor)));
}

}  // namespace detail

/**
 * Smoothed soft Jaccard loss averaged over the classes that appear in the
 * argmax of `probs` or of `target` on weighted pixels:
 *
 *   IoU_c = (sum w p t + eps) / (sum w p + sum w t - sum w p t + eps)
 *   L     = 1 - mean_c IoU_c
 */
template <typename Scalar>
LossValue<Scalar> soft_iou_loss(const Tensor<Scalar>& probs,
                                const Tensor<Scalar>& target,
                                const PixelWeights<Scalar>* weights = nullptr,
                                double eps = kIouSmoothing) {
  detail::check_pair(probs, target, "soft_iou_loss");
  const auto w = detail::resolve_weights(probs, weights, "soft_iou_loss");
  if ((w.array() != Scalar(0)).count() == 0) {
    throw std::invalid_argument("soft_iou_loss: all pixel weights are zero");
  }
  const int num_classes = probs.c();
  const int hw = probs.plane_size();
  const auto p = probs.sample(0);
  const auto t = target.sample(0);
  const Eigen::Map<const ArrayX<Scalar>> wf(w.data(), hw);

  const LabelMask pred = argmax(probs);
  std::vector<bool> present(num_classes, false);
  for (int i = 0; i < hw; ++i) {
    if (wf[i] == Scalar(0)) continue;
    present[pred.data()[i]] = true;
    if (t.col(i).sum() > Scalar(0)) {
      int best = 0;
      for (int c = 1; c < num_classes; ++c) {
        if (t(c, i) > t(best, i)) best = c;
      }
      present[best] = true;
    }
  }
  const int k = static_cast<int>(std::count(present.begin(), present.end(), true));

  LossValue<Scalar> out;
  out.grad = Tensor<Scalar>::like(probs);
  auto g = out.grad.sample(0);
  const Scalar e = static_cast<Scalar>(eps);
  Scalar iou_sum = 0;
  for (int c = 0; c < num_classes; ++c) {
    if (!present[c]) continue;
    const auto pc = p.row(c).transpose().array();
    const auto tc = t.row(c).transpose().array();
    const Scalar inter = (wf * pc * tc).sum();
    const Scalar union_ = (wf * pc).sum() + (wf * tc).sum() - inter;
    const Scalar num = inter + e, den = union_ + e;
    iou_sum += num / den;
    // d IoU / d p = w (t den - num (1 - t)) / den^2
    const ArrayX<Scalar> d = wf * (tc * den - num * (Scalar(1) - tc)) / (den * den);
    g.row(c) = (-d / static_cast<Scalar>(k)).matrix().transpose();
  }
  out.value = Scalar(1) - iou_sum / static_cast<Scalar>(k);
  return out;
}

/// Weighted mean over pixels of -sum_c t_c log p_c.
template <typename Scalar>
LossValue<Scalar> ce_loss(const Tensor<Scalar>& probs, const Tensor<Scalar>& target,
                          const PixelWeights<Scalar>* weights = nullptr) {
  detail::check_pair(probs, target, "ce_loss");
  const auto w = detail::resolve_weights(probs, weights, "ce_loss");
  const Scalar wsum = w.sum();
  if (!(wsum > Scalar(0))) {
    throw std::invalid_argument("ce_loss: all pixel weights are zero");
  }
  const int hw = probs.plane_size();
  const auto p = probs.sample(0);
  const auto t = target.sample(0);
  LossValue<Scalar> out;
  out.grad = Tensor<Scalar>::like(probs);
  auto g = out.grad.sample(0);
  Scalar total = 0;
  for (int i = 0; i < hw; ++i) {
    const Scalar wi = w.data()[i];
    if (wi == Scalar(0)) continue;
    for (int c = 0; c < probs.c(); ++c) {
      if (t(c, i) == Scalar(0)) continue;
      total -= wi * t(c, i) * detail::log_floor(p(c, i));
      if (p(c, i) >= static_cast<Scalar>(kProbFloor)) {
        g(c, i) = -wi * t(c, i) / (p(c, i) * wsum);
      }
    }
  }
  out.value = total / wsum;
  return out;
}

/// Cross-entropy against hard labels; ignored pixels get zero weight.
template <typename Scalar>
LossValue<Scalar> ce_loss(const Tensor<Scalar>& probs, const LabelMask& target,
                          const PixelWeights<Scalar>* weights = nullptr) {
  auto w = detail::resolve_weights(probs, weights, "ce_loss");
  if (target.rows() != probs.h() || target.cols() != probs.w()) {
    throw std::invalid_argument("ce_loss: label shape mismatch");
  }
  for (Eigen::Index i = 0; i < target.size(); ++i) {
    if (target.data()[i] == kIgnoreLabel) w.data()[i] = 0;
  }
  return ce_loss(probs, one_hot<Scalar>(target, probs.c()), &w);
}

/// Mean per-pixel prediction entropy H = -sum_c p_c log p_c.
template <typename Scalar>
LossValue<Scalar> entropy_loss(const Tensor<Scalar>& probs) {
  if (probs.n() != 1) throw std::invalid_argument("entropy_loss: expects one sample");
  const Scalar n = static_cast<Scalar>(probs.plane_size());
  LossValue<Scalar> out;
  out.grad = Tensor<Scalar>::like(probs);
  Scalar total = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const Scalar p = probs.data()[i];
    const Scalar lg = detail::log_floor(p);
    total -= p * lg;
    out.grad.data()[i] =
        (p >= static_cast<Scalar>(kProbFloor) ? -(lg + Scalar(1)) : -lg) / n;
  }
  out.value = total / n;
  return out;
}

/// (1/N) sum_i sum_c q log(q / p); gradient flows into p only.
template <typename Scalar>
LossValue<Scalar> reverse_kl(const Tensor<Scalar>& p, const Tensor<Scalar>& q) {
  detail::check_pair(p, q, "reverse_kl");
  const Scalar n = static_cast<Scalar>(p.plane_size());
  LossValue<Scalar> out;
  out.grad = Tensor<Scalar>::like(p);
  Scalar total = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const Scalar qi = q.data()[i];
    if (qi == Scalar(0)) continue;
    const Scalar pi = p.data()[i];
    total += qi * (detail::log_floor(qi) - detail::log_floor(pi));
    if (pi >= static_cast<Scalar>(kProbFloor)) out.grad.data()[i] = -qi / (pi * n);
  }
  out.value = total / n;
  return out;
}

}  // namespace sitta::losses

#endif  // SITTA_LOSSES_HPP_
