#ifndef SITTA_TOY_SEGMENTER_HPP_
#define SITTA_TOY_SEGMENTER_HPP_

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "sitta/nn/layers.hpp"

namespace sitta {

/**
 * Small encoder-decoder with skip connections:
 *
 *   e1 (H)   -> e2 (H/2) -> e3 (H/4) -> e4 (H/4)
 *   d2 = block(up(e4) ++ e2), d1 = block(up(d2) ++ e1), head = 1x1 conv.
 *
 * Templated on the scalar so whole-network gradients can be checked in double.
 */
template <typename Scalar>
class ToySegmenter {
 public:
  ToySegmenter(int num_classes = 4, int width = 8, bool norm = true)
      : num_classes_(num_classes), width_(width), norm_(norm),
        e1_("enc1", 3, width, 1, norm),
        e2_("enc2", width, 2 * width, 2, norm),
        e3_("enc3", 2 * width, 4 * width, 2, norm),
        e4_("enc4", 4 * width, 4 * width, 1, norm),
        d2_("dec2", 6 * width, 2 * width, 1, norm),
        d1_("dec1", 3 * width, width, 1, norm),
        head_("head", width, num_classes, 1) {}

  int num_classes() const { return num_classes_; }
  int width() const { return width_; }
  bool has_norm() const { return norm_; }

  void init(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    e1_.init(rng); e2_.init(rng); e3_.init(rng); e4_.init(rng);
    d2_.init(rng); d1_.init(rng); head_.init(rng);
  }

  void set_training(bool t) {
    training_ = t;
    for (auto* b : blocks()) b->set_training(t);
  }
  bool training() const { return training_; }

  Tensor<Scalar> forward(const Tensor<Scalar>& x) {
    h1_ = x.h(); w1_ = x.w();
    const Tensor<Scalar> a1 = e1_.forward(x);
    const Tensor<Scalar> a2 = e2_.forward(a1);
    const Tensor<Scalar> a3 = e3_.forward(a2);
    const Tensor<Scalar> a4 = e4_.forward(a3);
    h2_ = a2.h(); w2_ = a2.w(); h4_ = a4.h(); w4_ = a4.w();
    const Tensor<Scalar> b2 = d2_.forward(nn::concat_channels(nn::upsample2x(a4, h2_, w2_), a2));
    const Tensor<Scalar> b1 = d1_.forward(nn::concat_channels(nn::upsample2x(b2, h1_, w1_), a1));
    return head_.forward(b1);
  }

  /// Backpropagates through the most recent forward call.
  Tensor<Scalar> backward(const Tensor<Scalar>& dlogits, nn::GradRequest req = {}) {
    const nn::GradRequest inner{req.params, true};
    Tensor<Scalar> g = head_.backward(dlogits, inner);
    g = d1_.backward(g, inner);
    auto [g_up1, g_a1] = nn::split_channels(g, 2 * width_);
    g = d2_.backward(nn::upsample2x_backward(g_up1, h2_, w2_), inner);
    auto [g_up2, g_a2] = nn::split_channels(g, 4 * width_);
    g = e4_.backward(nn::upsample2x_backward(g_up2, h4_, w4_), inner);
    g = e3_.backward(g, inner);
    g.flat() += g_a2.flat();
    g = e2_.backward(g, inner);
    g.flat() += g_a1.flat();
    return e1_.backward(g, req);
  }

  std::vector<nn::Parameter<Scalar>*> parameters() {
    std::vector<nn::Parameter<Scalar>*> out;
    for (auto* b : blocks()) b->collect(out);
    head_.collect(out);
    return out;
  }
  std::vector<nn::Buffer<Scalar>*> buffers() {
    std::vector<nn::Buffer<Scalar>*> out;
    for (auto* b : blocks()) b->collect_buffers(out);
    return out;
  }

 private:
  std::vector<nn::ConvBlock<Scalar>*> blocks() {
    return {&e1_, &e2_, &e3_, &e4_, &d2_, &d1_};
  }

  int num_classes_, width_;
  bool norm_;
  bool training_ = false;
  nn::ConvBlock<Scalar> e1_, e2_, e3_, e4_, d2_, d1_;
  nn::Conv2d<Scalar> head_;
  int h1_ = 0, w1_ = 0, h2_ = 0, w2_ = 0, h4_ = 0, w4_ = 0;
};

}  // namespace sitta

#endif  // SITTA_TOY_SEGMENTER_HPP_
