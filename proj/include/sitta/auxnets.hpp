#ifndef SITTA_AUXNETS_HPP_
#define SITTA_AUXNETS_HPP_

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "sitta/attacks.hpp"
#include "sitta/core.hpp"
#include "sitta/dataset.hpp"
#include "sitta/nn/layers.hpp"
#include "sitta/ops.hpp"
#include "sitta/tensor.hpp"

namespace sitta::auxnets {

// ---------------------------------------------------------------------------
// Networks

/// U-Net over logit masks; inputs are standardized per sample and channel.
template <typename Scalar>
class UNetRefinerNet {
 public:
  explicit UNetRefinerNet(int num_classes = 4, int width = 16)
      : num_classes_(num_classes), width_(width),
        e1_("ref.enc1", num_classes, width),
        e2_("ref.enc2", width, 2 * width, 2),
        e3_("ref.enc3", 2 * width, 2 * width, 2),
        d2_("ref.dec2", 4 * width, 2 * width),
        d1_("ref.dec1", 3 * width, width),
        head_("ref.head", width, num_classes, 1) {}

  int num_classes() const { return num_classes_; }
  int width() const { return width_; }

  void init(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    e1_.init(rng); e2_.init(rng); e3_.init(rng); d2_.init(rng); d1_.init(rng);
    head_.init(rng);
  }
  void set_training(bool t) {
    for (auto* b : blocks()) b->set_training(t);
  }

  static Tensor<Scalar> standardize(const Tensor<Scalar>& x) {
    Tensor<Scalar> z = x;
    for (int n = 0; n < x.n(); ++n)
      for (int c = 0; c < x.c(); ++c) {
        auto p = z.plane(n, c).array();
        const Scalar mean = p.mean();
        const Scalar var = (p - mean).square().mean();
        p = (p - mean) / std::sqrt(var + Scalar(1e-5));
      }
    return z;
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& logits) {
    if (logits.c() != num_classes_) {
      throw std::invalid_argument("refiner: expected " + std::to_string(num_classes_) +
                                  " channels, got " + std::to_string(logits.c()));
    }
    h1_ = logits.h(); w1_ = logits.w();
    const Tensor<Scalar> a1 = e1_.forward(standardize(logits));
    const Tensor<Scalar> a2 = e2_.forward(a1);
    const Tensor<Scalar> a3 = e3_.forward(a2);
    h2_ = a2.h(); w2_ = a2.w(); h3_ = a3.h(); w3_ = a3.w();
    const Tensor<Scalar> b2 = d2_.forward(nn::concat_channels(nn::upsample2x(a3, h2_, w2_), a2));
    const Tensor<Scalar> b1 = d1_.forward(nn::concat_channels(nn::upsample2x(b2, h1_, w1_), a1));
    return head_.forward(b1);
  }

  /// Parameter gradients only; the refiner input never needs a gradient.
  void backward(const Tensor<Scalar>& dout) {
    const nn::GradRequest inner{true, true};
    Tensor<Scalar> g = head_.backward(dout, inner);
    g = d1_.backward(g, inner);
    auto [g_up1, g_a1] = nn::split_channels(g, 2 * width_);
    g = d2_.backward(nn::upsample2x_backward(g_up1, h2_, w2_), inner);
    auto [g_up2, g_a2] = nn::split_channels(g, 2 * width_);
    g = e3_.backward(nn::upsample2x_backward(g_up2, h3_, w3_), inner);
    g.flat() += g_a2.flat();
    g = e2_.backward(g, inner);
    g.flat() += g_a1.flat();
    e1_.backward(g, {true, false});
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
  std::vector<nn::ConvBlock<Scalar>*> blocks() { return {&e1_, &e2_, &e3_, &d2_, &d1_}; }

  int num_classes_, width_;
  nn::ConvBlock<Scalar> e1_, e2_, e3_, d2_, d1_;
  nn::Conv2d<Scalar> head_;
  int h1_ = 0, w1_ = 0, h2_ = 0, w2_ = 0, h3_ = 0, w3_ = 0;
};

/**
 * Mask-quality regressor: softmax -> three stride-2 conv+ReLU -> global
 * average pool -> two linear layers -> sigmoid. Differentiable with respect
 * to the input logits.
 */
template <typename Scalar>
class IoUEstimatorNet {
 public:
  explicit IoUEstimatorNet(int num_classes = 4, int width = 16)
      : num_classes_(num_classes), width_(width),
        c1_("diou.conv1", num_classes, width, 3, 2),
        c2_("diou.conv2", width, 2 * width, 3, 2),
        c3_("diou.conv3", 2 * width, 2 * width, 3, 2),
        fc1_("diou.fc1", 2 * width, 2 * width),
        fc2_("diou.fc2", 2 * width, 1) {}

  int num_classes() const { return num_classes_; }
  int width() const { return width_; }

  void init(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    c1_.init(rng); c2_.init(rng); c3_.init(rng);
    fc1_.init(rng);
    fc2_.init(rng, 1.0);
  }

  /// Returns Nx1x1x1 predictions in (0, 1).
  Tensor<Scalar> forward(const Tensor<Scalar>& logits) {
    if (logits.c() != num_classes_) {
      throw std::invalid_argument("iou estimator: channel mismatch");
    }
    probs_ = softmax(logits);
    Tensor<Scalar> h = r1_.forward(c1_.forward(probs_));
    h = r2_.forward(c2_.forward(h));
    h = r3_.forward(c3_.forward(h));
    ph_ = h.h(); pw_ = h.w();
    h = r4_.forward(fc1_.forward(nn::global_avg_pool(h)));
    Tensor<Scalar> y = fc2_.forward(h);
    y.flat() = Scalar(1) / (Scalar(1) + (-y.flat()).exp());
    out_ = y;
    return y;
  }

  /// dL/d(prediction) -> dL/d(logits). Parameter gradients on request.
  Tensor<Scalar> backward(const Tensor<Scalar>& dy, bool params) {
    const nn::GradRequest req{params, true};
    Tensor<Scalar> g = dy;
    g.flat() *= out_.flat() * (Scalar(1) - out_.flat());
    g = fc2_.backward(g, req);
    g = fc1_.backward(r4_.backward(g), req);
    g = nn::global_avg_pool_backward(g, ph_, pw_);
    g = c3_.backward(r3_.backward(g), req);
    g = c2_.backward(r2_.backward(g), req);
    g = c1_.backward(r1_.backward(g), req);
    return softmax_backward(probs_, g);
  }

  std::vector<nn::Parameter<Scalar>*> parameters() {
    std::vector<nn::Parameter<Scalar>*> out;
    c1_.collect(out); c2_.collect(out); c3_.collect(out);
    fc1_.collect(out); fc2_.collect(out);
    return out;
  }
  std::vector<nn::Buffer<Scalar>*> buffers() { return {}; }

 private:
  int num_classes_, width_;
  nn::Conv2d<Scalar> c1_, c2_, c3_;
  nn::ReLU<Scalar> r1_, r2_, r3_, r4_;
  nn::Linear<Scalar> fc1_, fc2_;
  Tensor<Scalar> probs_, out_;
  int ph_ = 0, pw_ = 0;
};

// ---------------------------------------------------------------------------
// Inference interfaces used by the adaptation methods

class MaskRefiner {
 public:
  virtual ~MaskRefiner() = default;
  virtual int num_classes() const = 0;
  /// Softmax-normalized refined mask.
  virtual ProbMask refine(const LogitMask& logits) = 0;
};

/// Returns softmax(logits) unchanged; the degenerate refiner.
class IdentityRefiner final : public MaskRefiner {
 public:
  explicit IdentityRefiner(int num_classes) : num_classes_(num_classes) {}
  int num_classes() const override { return num_classes_; }
  ProbMask refine(const LogitMask& logits) override;

 private:
  int num_classes_;
};

class UNetRefiner final : public MaskRefiner {
 public:
  explicit UNetRefiner(int num_classes = 4, int width = 16) : net_(num_classes, width) {}
  int num_classes() const override { return net_.num_classes(); }
  ProbMask refine(const LogitMask& logits) override;

  UNetRefinerNet<float>& net() { return net_; }
  void save(const std::string& path);
  static std::unique_ptr<UNetRefiner> load(const std::string& path);

 private:
  UNetRefinerNet<float> net_;
};

class IoUEstimator {
 public:
  virtual ~IoUEstimator() = default;
  virtual int num_classes() const = 0;
  /// Predicted soft-IoU loss of the mask, in [0, 1].
  virtual double predict(const LogitMask& logits) = 0;
  /// Prediction plus its gradient with respect to the logits.
  virtual double predict_with_grad(const LogitMask& logits, LogitMask& grad) = 0;
};

class DeepIoUEstimator final : public IoUEstimator {
 public:
  explicit DeepIoUEstimator(int num_classes = 4, int width = 16) : net_(num_classes, width) {}
  int num_classes() const override { return net_.num_classes(); }
  double predict(const LogitMask& logits) override;
  double predict_with_grad(const LogitMask& logits, LogitMask& grad) override;

  IoUEstimatorNet<float>& net() { return net_; }
  void save(const std::string& path);
  static std::unique_ptr<DeepIoUEstimator> load(const std::string& path);

 private:
  IoUEstimatorNet<float> net_;
};

// ---------------------------------------------------------------------------
// Training data and training

enum class TargetKind { kPredictions, kGroundTruth };
std::string to_string(TargetKind kind);
TargetKind parse_target_kind(const std::string& text);

struct RefinerPair {
  LogitMask corrupted;  // segmenter logits on the attacked image
  LabelMask target;     // clean prediction or ground truth
  TargetKind target_kind = TargetKind::kPredictions;
  std::string source_id;
  int t = 0;            // attack iteration
};

/**
 * For every image, runs a PGD attack toward the inverted clean prediction
 * and pairs the logits at each harvested iteration with the clean target.
 * Iteration 0 pairs the clean logits with the target.
 */
std::vector<RefinerPair> gen_refiner_pairs(core::ModelAdapter& model,
                                           const std::vector<data::Sample>& images,
                                           const attacks::AttackConfig& attack,
                                           const std::vector<int>& harvest,
                                           TargetKind target_kind);

/// 90/10 split by source image id; returns (train, validation) indices.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_by_source(
    const std::vector<std::string>& source_ids, double val_fraction, std::uint64_t seed);

struct AuxTrainOptions {
  int epochs = 20;
  double lr = 1e-3;
  int batch_size = 8;
  int width = 16;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
};

struct TrainingCurve {
  std::vector<double> train_loss;  // per epoch, mean over training pairs
  std::vector<double> val_loss;    // per epoch; empty when no validation split
};

struct TrainedRefiner {
  std::unique_ptr<UNetRefiner> refiner;
  TrainingCurve curve;
};

/// Minimizes pixel-wise CE between refined output and target (AdamW).
TrainedRefiner train_refiner(const std::vector<RefinerPair>& pairs,
                             const AuxTrainOptions& options);

/// Softmax-normalized refinement; throws on channel mismatch.
ProbMask refine(MaskRefiner& refiner, const LogitMask& logits);

struct IoUPair {
  LogitMask mask;
  double label = 0;  // soft IoU loss of the mask against its target
  std::string source_id;
};

/// Labels every pair with soft_iou_loss(softmax(corrupted), one-hot(target)).
std::vector<IoUPair> make_iou_pairs(const std::vector<RefinerPair>& pairs);

struct TrainedEstimator {
  std::unique_ptr<DeepIoUEstimator> estimator;
  TrainingCurve curve;
};

/// Squared-error regression of the labels; throws if a label is outside [0,1].
TrainedEstimator train_diou(const std::vector<IoUPair>& pairs, const AuxTrainOptions& options);

double predict_iou_loss(IoUEstimator& estimator, const LogitMask& logits);

}  // namespace sitta::auxnets

#endif  // SITTA_AUXNETS_HPP_
