#ifndef SITTA_OPS_HPP_
#define SITTA_OPS_HPP_

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sitta/tensor.hpp"

namespace sitta {

/// Channel softmax of every pixel of every sample.
template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& logits) {
  Tensor<Scalar> out = Tensor<Scalar>::like(logits);
  const int hw = logits.plane_size();
  for (int n = 0; n < logits.n(); ++n) {
    auto z = logits.sample(n);
    auto p = out.sample(n);
    for (int i = 0; i < hw; ++i) {
      const Scalar m = z.col(i).maxCoeff();
      p.col(i) = (z.col(i).array() - m).exp().matrix();
      p.col(i) /= p.col(i).sum();
    }
  }
  return out;
}

/// Pulls dL/dp back through the softmax to dL/dz: p * (g - <p, g>).
template <typename Scalar>
Tensor<Scalar> softmax_backward(const Tensor<Scalar>& probs,
                                const Tensor<Scalar>& grad_probs) {
  if (!probs.same_shape(grad_probs)) {
    throw std::invalid_argument("softmax_backward: shape mismatch");
  }
  Tensor<Scalar> out = Tensor<Scalar>::like(probs);
  const int hw = probs.plane_size();
  for (int n = 0; n < probs.n(); ++n) {
    auto p = probs.sample(n);
    auto g = grad_probs.sample(n);
    auto d = out.sample(n);
    for (int i = 0; i < hw; ++i) {
      const Scalar dot = p.col(i).dot(g.col(i));
      d.col(i) = (p.col(i).array() * (g.col(i).array() - dot)).matrix();
    }
  }
  return out;
}

/// Per-pixel argmax of sample n; ties go to the lowest class index.
template <typename Scalar>
LabelMask argmax(const Tensor<Scalar>& scores, int n = 0) {
  LabelMask out(scores.h(), scores.w());
  auto s = scores.sample(n);
  for (int i = 0; i < scores.plane_size(); ++i) {
    int best = 0;
    for (int c = 1; c < scores.c(); ++c) {
      if (s(c, i) > s(best, i)) best = c;
    }
    out.data()[i] = static_cast<std::uint8_t>(best);
  }
  return out;
}

/// Per-pixel maximum over channels of sample n.
template <typename Scalar>
RowMatrix<Scalar> max_over_channels(const Tensor<Scalar>& scores, int n = 0) {
  RowMatrix<Scalar> out(scores.h(), scores.w());
  auto s = scores.sample(n);
  for (int i = 0; i < scores.plane_size(); ++i) {
    out.data()[i] = s.col(i).maxCoeff();
  }
  return out;
}

/// 1xCxHxW one-hot encoding; ignored pixels get an all-zero column.
template <typename Scalar>
Tensor<Scalar> one_hot(const LabelMask& labels, int num_classes) {
  Tensor<Scalar> out(1, num_classes, static_cast<int>(labels.rows()),
                     static_cast<int>(labels.cols()));
  auto o = out.sample(0);
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    const int k = labels.data()[i];
    if (k == kIgnoreLabel) continue;
    if (k >= num_classes) throw std::invalid_argument("one_hot: label >= C");
    o(k, i) = Scalar(1);
  }
  return out;
}

/// Bilinear resize with half-pixel centers (edge-clamped).
template <typename Scalar>
Tensor<Scalar> resize_bilinear(const Tensor<Scalar>& src, int out_h, int out_w) {
  Tensor<Scalar> out(src.n(), src.c(), out_h, out_w);
  const double sy = static_cast<double>(src.h()) / out_h;
  const double sx = static_cast<double>(src.w()) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, src.h() - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src.h() - 1);
    const Scalar ay = static_cast<Scalar>(fy - y0);
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, src.w() - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src.w() - 1);
      const Scalar ax = static_cast<Scalar>(fx - x0);
      for (int n = 0; n < src.n(); ++n) {
        for (int c = 0; c < src.c(); ++c) {
          const Scalar top = src(n, c, y0, x0) * (1 - ax) + src(n, c, y0, x1) * ax;
          const Scalar bot = src(n, c, y1, x0) * (1 - ax) + src(n, c, y1, x1) * ax;
          out(n, c, y, x) = top * (1 - ay) + bot * ay;
        }
      }
    }
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> crop(const Tensor<Scalar>& src, int top, int left, int h, int w) {
  if (top < 0 || left < 0 || top + h > src.h() || left + w > src.w()) {
    throw std::invalid_argument("crop: box outside tensor");
  }
  Tensor<Scalar> out(src.n(), src.c(), h, w);
  for (int n = 0; n < src.n(); ++n) {
    for (int c = 0; c < src.c(); ++c) {
      out.plane(n, c) = src.plane(n, c).block(top, left, h, w);
    }
  }
  return out;
}

template <typename Scalar>
bool all_finite(const Tensor<Scalar>& t) {
  return t.flat().isFinite().all();
}

/// Mean per-pixel entropy -sum p log p of sample n.
template <typename Scalar>
double mean_entropy(const Tensor<Scalar>& probs, int n = 0) {
  const auto p = probs.sample(n).array().template cast<double>();
  const auto clamped = p.max(1e-8);
  return -(p * clamped.log()).sum() / probs.plane_size();
}

}  // namespace sitta

#endif  // SITTA_OPS_HPP_
