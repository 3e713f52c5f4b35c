#ifndef SITTA_ATTACKS_HPP_
#define SITTA_ATTACKS_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sitta/core.hpp"
#include "sitta/tensor.hpp"

namespace sitta::attacks {

struct AttackConfig {
  int steps = 10;
  double step = 1.0 / 255.0;    // per-pixel magnitude in [0,1] intensity units
  std::optional<double> budget;  // L-infinity radius; clipping only when unset
  std::uint64_t seed = 0;
};

/// Per pixel: zero mass on the predicted class, uniform over the others.
ProbMask inverted_target(const ProbMask& probs);

/// Mean cross-entropy of the model's softmax on `image` against `target`,
/// and its gradient with respect to the image. Model weights are untouched.
struct InputGradient {
  double loss = 0;
  LogitMask logits;
  Image grad;
};
InputGradient targeted_ce_gradient(core::ModelAdapter& model, const Image& image,
                                   const ProbMask& target);

/// image' = clip(image - step * sign(d CE / d image)); targeted descent.
Image fgsm_step(core::ModelAdapter& model, const Image& image, const ProbMask& target,
                double step);

struct TrajectoryStep {
  int t = 0;
  Image image;
  LogitMask logits;
};

/**
 * Iterated FGSM from the clean image (no random start), clipping to [0,1]
 * and, when a budget is set, to the L-infinity ball after each step.
 * Returns steps 1..cfg.steps.
 */
std::vector<TrajectoryStep> pgd_attack(core::ModelAdapter& model, const Image& image,
                                       const ProbMask& target, const AttackConfig& cfg);

/// Writes `<dir>/<image_id>__t<t>.npy.gz` and a JSON sidecar next to it.
void dump_trajectory_step(const std::string& dir, const std::string& image_id,
                          const TrajectoryStep& step, const AttackConfig& cfg);

}  // namespace sitta::attacks

#endif  // SITTA_ATTACKS_HPP_
