#ifndef SITTA_TTA_HPP_
#define SITTA_TTA_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sitta/auxnets.hpp"
#include "sitta/core.hpp"
#include "sitta/losses.hpp"
#include "sitta/metrics.hpp"
#include "sitta/tensor.hpp"

namespace sitta::tta {

enum class Method { kEnt, kPL, kAugCo, kAdv, kRef, kDIoU };
enum class LossKind { kCE, kIoU, kEnt, kKL, kNone };

std::string to_string(Method m);
std::string to_string(LossKind l);
Method parse_method(const std::string& text);
LossKind parse_loss(const std::string& text);

/// Loss kinds each method accepts: Ent/ent, PL|Ref|AugCo/{ce,iou}, Adv/kl, dIoU/none.
std::vector<LossKind> valid_losses(Method m);
bool valid_combination(Method m, LossKind l);
bool needs_refiner(Method m);
bool needs_estimator(Method m);

inline constexpr int kMaxIterations = 10;

struct TTAConfig {
  Method method = Method::kPL;
  LossKind loss = LossKind::kIoU;
  core::ParamScope scope = core::ParamScope::kFull;
  double lr = 1e-3;
  int iterations = kMaxIterations;
  std::uint64_t seed = 0;

  double pl_threshold = 0.0;      // pixels below this max-probability are dropped
  double augco_conf = 0.8;        // confidence threshold of the reliability mask
  double augco_min_area = 0.25;   // crop area fraction range
  double augco_max_area = 0.50;
  double augco_jitter = 0.2;      // brightness/contrast/saturation amplitude
  double adv_step = 1.0 / 255.0;  // FGSM step

  /// Throws std::invalid_argument on an invalid method/loss pair, lr < 0 or
  /// iterations outside [0, 10].
  void validate() const;
  /// "method/loss/scope/lr=<lr>"; the iteration count is not part of the key.
  std::string key() const;
  nlohmann::json to_json() const;
  static TTAConfig from_json(const nlohmann::json& j);
};

/// Frozen auxiliaries; methods that need one throw when it is missing.
struct AuxModels {
  auxnets::MaskRefiner* refiner = nullptr;
  auxnets::IoUEstimator* estimator = nullptr;
};

struct Objective {
  double value = 0;
  bool has_gradient = true;  // false when no pixel contributes (zero step)
};

/**
 * Evaluates the method's objective on `image` at the current weights and
 * accumulates its gradient into the model's parameter gradients. Pseudo
 * targets are treated as constants. `step` selects the per-iteration
 * randomness of AugCo crops and jitter.
 */
Objective compute_objective(core::ModelAdapter& model, const Image& image, const TTAConfig& cfg,
                            const AuxModels& aux, int step = 0);

/// Pixel reliable iff argmax(view1) == argmax(view2) or max(view2) >= conf.
losses::PixelWeights<float> augco_reliability(const ProbMask& view1, const ProbMask& view2,
                                              double conf);

struct AugCoViews {
  ProbMask view1;  // resized crop of the full-image prediction
  Image view2_input;
  int top = 0, left = 0, height = 0, width = 0;
};

/// Crop box and jittered input for AugCo step `step` (deterministic in seed).
AugCoViews make_augco_views(const ProbMask& full_probs, const Image& image, const TTAConfig& cfg,
                            int step);

struct IterationRecord {
  int iteration = 0;
  std::optional<double> objective;  // empty for iteration 0
  double entropy = 0;
  std::optional<double> miou_i;     // empty without ground truth
  std::optional<metrics::PerImageCounts> counts;
  LabelMask mask;
};

struct AdaptationRecord {
  std::string image_id;
  TTAConfig config;
  std::vector<IterationRecord> iterations;  // iterations + 1 entries, [0] is NA
  bool diverged = false;
  int diverged_at = -1;
  double wall_ms = 0;

  const IterationRecord& na() const { return iterations.front(); }
  const IterationRecord& final() const { return iterations.back(); }
  /// Masks are omitted; per-iteration scalars only.
  nlohmann::json to_json() const;
};

/**
 * SITTA contract: snapshots the weights, runs cfg.iterations plain SGD steps
 * on the scoped parameters, records the mask after every step and restores
 * the snapshot before returning. A non-finite loss or gradient aborts the
 * run; the record then repeats the NA entry and is flagged diverged.
 */
AdaptationRecord adapt_single_image(core::ModelAdapter& model, const Image& image,
                                    const TTAConfig& cfg, const AuxModels& aux = {},
                                    const std::optional<LabelMask>& gt = std::nullopt,
                                    const std::string& image_id = {});

}  // namespace sitta::tta

#endif  // SITTA_TTA_HPP_
