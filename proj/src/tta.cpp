#include "sitta/tta.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <stdexcept>

#include "sitta/attacks.hpp"
#include "sitta/nn/optim.hpp"
#include "sitta/ops.hpp"

namespace sitta::tta {
namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Mask loss of `probs` against hard `labels` on the weighted pixels. Returns
// false (and leaves `out` untouched) when every weight is zero.
bool mask_loss(LossKind kind, const ProbMask& probs, const LabelMask& labels,
               const losses::PixelWeights<float>& weights, losses::LossValue<float>& out) {
  if ((weights.array() != 0.0f).count() == 0) return false;
  if (kind == LossKind::kCE) {
    out = losses::ce_loss(probs, labels, &weights);
  } else {
    out = losses::soft_iou_loss(probs, one_hot<float>(labels, probs.c()), &weights);
  }
  return true;
}

losses::PixelWeights<float> confidence_weights(const ProbMask& probs, double threshold) {
  const RowMatrix<float> conf = max_over_channels(probs);
  return (conf.array() >= static_cast<float>(threshold)).cast<float>().matrix();
}

Image jitter(const Image& image, double amplitude, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-amplitude, amplitude);
  const float b = static_cast<float>(1 + u(rng));
  const float c = static_cast<float>(1 + u(rng));
  const float s = static_cast<float>(1 + u(rng));
  Image out = image;
  for (int ch = 0; ch < 3; ++ch) out.plane(0, ch) *= b;
  for (int ch = 0; ch < 3; ++ch) {
    auto p = out.plane(0, ch).array();
    const float mean = p.mean();
    p = (p - mean) * c + mean;
  }
  const RowMatrix<float> gray =
      0.299f * out.plane(0, 0) + 0.587f * out.plane(0, 1) + 0.114f * out.plane(0, 2);
  for (int ch = 0; ch < 3; ++ch) {
    auto p = out.plane(0, ch);
    p = gray + (p - gray) * s;
  }
  out.flat() = out.flat().min(1.0f).max(0.0f);
  return out;
}

Objective finish(core::ModelAdapter& model, const ProbMask& probs,
                 const losses::LossValue<float>& loss) {
  model.backward(softmax_backward(probs, loss.grad), {true, false});
  return {loss.value, true};
}

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::kEnt: return "Ent";
    case Method::kPL: return "PL";
    case Method::kAugCo: return "AugCo";
    case Method::kAdv: return "Adv";
    case Method::kRef: return "Ref";
    case Method::kDIoU: return "dIoU";
  }
  return "?";
}

std::string to_string(LossKind l) {
  switch (l) {
    case LossKind::kCE: return "ce";
    case LossKind::kIoU: return "iou";
    case LossKind::kEnt: return "ent";
    case LossKind::kKL: return "kl";
    case LossKind::kNone: return "-";
  }
  return "?";
}

Method parse_method(const std::string& text) {
  for (Method m : {Method::kEnt, Method::kPL, Method::kAugCo, Method::kAdv, Method::kRef,
                   Method::kDIoU}) {
    std::string a = to_string(m), b = text;
    std::transform(a.begin(), a.end(), a.begin(), ::tolower);
    std::transform(b.begin(), b.end(), b.begin(), ::tolower);
    if (a == b) return m;
  }
  throw std::invalid_argument("unknown TTA method '" + text + "'");
}

LossKind parse_loss(const std::string& text) {
  if (text == "ce") return LossKind::kCE;
  if (text == "iou") return LossKind::kIoU;
  if (text == "ent") return LossKind::kEnt;
  if (text == "kl") return LossKind::kKL;
  if (text == "-" || text == "none" || text.empty()) return LossKind::kNone;
  throw std::invalid_argument("unknown loss kind '" + text + "'");
}

std::vector<LossKind> valid_losses(Method m) {
  switch (m) {
    case Method::kEnt: return {LossKind::kEnt};
    case Method::kPL:
    case Method::kRef:
    case Method::kAugCo: return {LossKind::kCE, LossKind::kIoU};
    case Method::kAdv: return {LossKind::kKL};
    case Method::kDIoU: return {LossKind::kNone};
  }
  return {};
}

bool valid_combination(Method m, LossKind l) {
  const auto v = valid_losses(m);
  return std::find(v.begin(), v.end(), l) != v.end();
}

bool needs_refiner(Method m) { return m == Method::kRef; }
bool needs_estimator(Method m) { return m == Method::kDIoU; }

void TTAConfig::validate() const {
  if (!valid_combination(method, loss)) {
    throw std::invalid_argument("invalid method/loss combination " + to_string(method) + "/" +
                                to_string(loss));
  }
  if (!(lr >= 0) || !std::isfinite(lr)) throw std::invalid_argument("lr must be >= 0");
  if (iterations < 0 || iterations > kMaxIterations) {
    throw std::invalid_argument("iterations must be in [0, 10]");
  }
  if (augco_min_area <= 0 || augco_max_area > 1 || augco_min_area > augco_max_area) {
    throw std::invalid_argument("AugCo crop area range must satisfy 0 < min <= max <= 1");
  }
}

std::string TTAConfig::key() const {
  char lr_text[32];
  std::snprintf(lr_text, sizeof(lr_text), "%g", lr);
  return to_string(method) + "/" + to_string(loss) + "/" +
         (scope == core::ParamScope::kFull ? "full" : "norm") + "/lr=" + lr_text;
}

nlohmann::json TTAConfig::to_json() const {
  return {{"method", to_string(method)},
          {"loss", to_string(loss)},
          {"scope", core::to_string(scope)},
          {"lr", lr},
          {"iterations", iterations},
          {"seed", seed},
          {"pl_threshold", pl_threshold},
          {"augco_conf", augco_conf},
          {"augco_min_area", augco_min_area},
          {"augco_max_area", augco_max_area},
          {"augco_jitter", augco_jitter},
          {"adv_step", adv_step}};
}

TTAConfig TTAConfig::from_json(const nlohmann::json& j) {
  TTAConfig c;
  c.method = parse_method(j.at("method").get<std::string>());
  c.loss = parse_loss(j.at("loss").get<std::string>());
  c.scope = core::parse_scope(j.at("scope").get<std::string>());
  c.lr = j.at("lr").get<double>();
  c.iterations = j.at("iterations").get<int>();
  c.seed = j.value("seed", std::uint64_t{0});
  c.pl_threshold = j.value("pl_threshold", c.pl_threshold);
  c.augco_conf = j.value("augco_conf", c.augco_conf);
  c.augco_min_area = j.value("augco_min_area", c.augco_min_area);
  c.augco_max_area = j.value("augco_max_area", c.augco_max_area);
  c.augco_jitter = j.value("augco_jitter", c.augco_jitter);
  c.adv_step = j.value("adv_step", c.adv_step);
  return c;
}

// ---------------------------------------------------------------------------

losses::PixelWeights<float> augco_reliability(const ProbMask& view1, const ProbMask& view2,
                                              double conf) {
  if (!view1.same_shape(view2)) {
    throw std::invalid_argument("augco_reliability: view shapes differ (" +
                                view1.shape_string() + " vs " + view2.shape_string() + ")");
  }
  const LabelMask a = argmax(view1), b = argmax(view2);
  const RowMatrix<float> c2 = max_over_channels(view2);
  losses::PixelWeights<float> out(view1.h(), view1.w());
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    const bool consistent = a.data()[i] == b.data()[i];
    const bool confident = c2.data()[i] >= static_cast<float>(conf);
    out.data()[i] = (consistent || confident) ? 1.0f : 0.0f;
  }
  return out;
}

AugCoViews make_augco_views(const ProbMask& full_probs, const Image& image, const TTAConfig& cfg,
                            int step) {
  std::mt19937_64 rng(mix(cfg.seed ^ mix(static_cast<std::uint64_t>(step) + 1)));
  std::uniform_real_distribution<double> area(cfg.augco_min_area, cfg.augco_max_area);
  const int h = image.h(), w = image.w();
  const double side = std::sqrt(area(rng));
  AugCoViews v;
  v.height = std::clamp(static_cast<int>(std::lround(h * side)), 1, h);
  v.width = std::clamp(static_cast<int>(std::lround(w * side)), 1, w);
  v.top = std::uniform_int_distribution<int>(0, h - v.height)(rng);
  v.left = std::uniform_int_distribution<int>(0, w - v.width)(rng);
  v.view1 = resize_bilinear(crop(full_probs, v.top, v.left, v.height, v.width), h, w);
  const Image jittered = jitter(image, cfg.augco_jitter, rng);
  v.view2_input = resize_bilinear(crop(jittered, v.top, v.left, v.height, v.width), h, w);
  return v;
}

Objective compute_objective(core::ModelAdapter& model, const Image& image, const TTAConfig& cfg,
                            const AuxModels& aux, int step) {
  if (!valid_combination(cfg.method, cfg.loss)) cfg.validate();
  losses::LossValue<float> loss;
  switch (cfg.method) {
    case Method::kEnt: {
      const ProbMask p = softmax(model.forward(image));
      return finish(model, p, losses::entropy_loss(p));
    }
    case Method::kPL: {
      const ProbMask p = softmax(model.forward(image));
      const auto w = confidence_weights(p, cfg.pl_threshold);
      if (!mask_loss(cfg.loss, p, argmax(p), w, loss)) return {0.0, false};
      return finish(model, p, loss);
    }
    case Method::kRef: {
      if (aux.refiner == nullptr) throw std::invalid_argument("Ref requires a mask refiner");
      const LogitMask logits = model.forward(image);
      const ProbMask p = softmax(logits);
      const LabelMask target = argmax(aux.refiner->refine(logits));
      const losses::PixelWeights<float> w = losses::PixelWeights<float>::Ones(p.h(), p.w());
      mask_loss(cfg.loss, p, target, w, loss);
      return finish(model, p, loss);
    }
    case Method::kDIoU: {
      if (aux.estimator == nullptr) throw std::invalid_argument("dIoU requires an IoU estimator");
      const LogitMask logits = model.forward(image);
      LogitMask grad;
      const double value = aux.estimator->predict_with_grad(logits, grad);
      model.backward(grad, {true, false});
      return {value, true};
    }
    case Method::kAdv: {
      const ProbMask clean = softmax(model.forward(image));
      const Image perturbed =
          attacks::fgsm_step(model, image, attacks::inverted_target(clean), cfg.adv_step);
      const ProbMask q = softmax(model.forward(perturbed));
      const ProbMask p = softmax(model.forward(image));
      return finish(model, p, losses::reverse_kl(p, q));
    }
    case Method::kAugCo: {
      const ProbMask full = softmax(model.forward(image));
      const AugCoViews views = make_augco_views(full, image, cfg, step);
      const ProbMask v2 = softmax(model.forward(views.view2_input));
      const auto w = augco_reliability(views.view1, v2, cfg.augco_conf);
      if (!mask_loss(cfg.loss, v2, argmax(v2), w, loss)) return {0.0, false};
      return finish(model, v2, loss);
    }
  }
  throw std::logic_error("compute_objective: unhandled method");
}

// ---------------------------------------------------------------------------

namespace {

IterationRecord observe(core::ModelAdapter& model, const Image& image,
                        const std::optional<LabelMask>& gt, int iteration) {
  IterationRecord r;
  r.iteration = iteration;
  const ProbMask p = softmax(model.forward(image));
  r.entropy = mean_entropy(p);
  r.mask = argmax(p);
  if (gt) {
    r.counts = metrics::confusion_counts(r.mask, *gt, p.c());
    r.miou_i = metrics::miou_i(*r.counts);
  }
  return r;
}

}  // namespace

AdaptationRecord adapt_single_image(core::ModelAdapter& model, const Image& image,
                                    const TTAConfig& cfg, const AuxModels& aux,
                                    const std::optional<LabelMask>& gt,
                                    const std::string& image_id) {
  cfg.validate();
  if (needs_refiner(cfg.method) && aux.refiner == nullptr) {
    throw std::invalid_argument("Ref requires a mask refiner");
  }
  if (needs_estimator(cfg.method) && aux.estimator == nullptr) {
    throw std::invalid_argument("dIoU requires an IoU estimator");
  }
  if (model.training()) throw std::logic_error("adapt_single_image: model must be in eval mode");
  const auto start = std::chrono::steady_clock::now();
  AdaptationRecord rec;
  rec.image_id = image_id;
  rec.config = cfg;
  rec.iterations.push_back(observe(model, image, gt, 0));

  const core::WeightSnapshot snapshot = core::snapshot_weights(model);
  const auto scoped = core::select_params(model, cfg.scope);
  try {
    for (int i = 1; i <= cfg.iterations; ++i) {
      model.zero_grad();
      const Objective obj = compute_objective(model, image, cfg, aux, i);
      if (!std::isfinite(obj.value) || (obj.has_gradient && !nn::grads_finite(scoped))) {
        rec.diverged = true;
        rec.diverged_at = i;
        break;
      }
      if (obj.has_gradient) nn::sgd_step(scoped, cfg.lr);
      IterationRecord r = observe(model, image, gt, i);
      if (!std::isfinite(r.entropy)) {
        rec.diverged = true;
        rec.diverged_at = i;
        break;
      }
      r.objective = obj.value;
      rec.iterations.push_back(std::move(r));
    }
  } catch (...) {
    core::restore_weights(model, snapshot);
    model.zero_grad();
    throw;
  }
  core::restore_weights(model, snapshot);
  model.zero_grad();

  if (rec.diverged) {
    const IterationRecord na = rec.iterations.front();
    rec.iterations.assign(1, na);
    for (int i = 1; i <= cfg.iterations; ++i) {
      IterationRecord r = na;
      r.iteration = i;
      rec.iterations.push_back(std::move(r));
    }
  }
  rec.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

nlohmann::json AdaptationRecord::to_json() const {
  nlohmann::json iters = nlohmann::json::array();
  for (const auto& r : iterations) {
    nlohmann::json j = {{"i", r.iteration}, {"entropy", r.entropy}};
    j["objective"] = r.objective ? nlohmann::json(*r.objective) : nlohmann::json(nullptr);
    j["miou_i"] = r.miou_i ? nlohmann::json(*r.miou_i) : nlohmann::json(nullptr);
    iters.push_back(std::move(j));
  }
  return {{"image", image_id},
          {"config", config.to_json()},
          {"key", config.key()},
          {"diverged", diverged},
          {"diverged_at", diverged_at},
          {"wall_ms", wall_ms},
          {"iterations", std::move(iters)}};
}

}  // namespace sitta::tta
