#include "sitta/attacks.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "sitta/image_io.hpp"
#include "sitta/ops.hpp"

namespace sitta::attacks {

ProbMask inverted_target(const ProbMask& probs) {
  const int num_classes = probs.c();
  if (num_classes < 2) throw std::invalid_argument("inverted_target: needs C >= 2");
  const LabelMask pred = argmax(probs);
  ProbMask out = ProbMask::like(probs, 1.0f / static_cast<float>(num_classes - 1));
  auto o = out.sample(0);
  for (int i = 0; i < probs.plane_size(); ++i) o(pred.data()[i], i) = 0.0f;
  return out;
}

InputGradient targeted_ce_gradient(core::ModelAdapter& model, const Image& image,
                                   const ProbMask& target) {
  if (model.training()) {
    throw std::logic_error("attacks require the model in evaluation mode");
  }
  InputGradient out;
  out.logits = model.forward(image);
  if (!out.logits.same_shape(target)) {
    throw std::invalid_argument("attack target shape " + target.shape_string() +
                                " does not match logits " + out.logits.shape_string());
  }
  const ProbMask probs = softmax(out.logits);
  const double n = probs.plane_size();
  double loss = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (target.data()[i] > 0) {
      loss -= target.data()[i] * std::log(std::max(probs.data()[i], 1e-8f));
    }
  }
  out.loss = loss / n;
  // d CE / d logits for a per-pixel distribution target is (p - t) / N.
  TensorF dlogits = probs;
  dlogits.flat() = (probs.flat() - target.flat()) / static_cast<float>(n);
  out.grad = model.backward(dlogits, {/*params=*/false, /*input=*/true});
  if (!all_finite(out.grad)) throw std::runtime_error("attack: non-finite input gradient");
  return out;
}

Image fgsm_step(core::ModelAdapter& model, const Image& image, const ProbMask& target,
                double step) {
  if (step == 0.0) return image;
  const auto g = targeted_ce_gradient(model, image, target);
  Image out = image;
  const float s = static_cast<float>(step);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const float gi = g.grad.data()[i];
    const float sign = gi > 0 ? 1.0f : (gi < 0 ? -1.0f : 0.0f);
    out.data()[i] = std::clamp(image.data()[i] - s * sign, 0.0f, 1.0f);
  }
  return out;
}

std::vector<TrajectoryStep> pgd_attack(core::ModelAdapter& model, const Image& image,
                                       const ProbMask& target, const AttackConfig& cfg) {
  if (cfg.steps < 0) throw std::invalid_argument("pgd_attack: negative step count");
  std::vector<TrajectoryStep> out;
  Image current = image;
  for (int t = 1; t <= cfg.steps; ++t) {
    current = fgsm_step(model, current, target, cfg.step);
    if (cfg.budget) {
      const float r = static_cast<float>(*cfg.budget);
      for (std::size_t i = 0; i < current.size(); ++i) {
        current.data()[i] = std::clamp(current.data()[i], image.data()[i] - r, image.data()[i] + r);
      }
    }
    out.push_back({t, current, model.forward(current)});
  }
  return out;
}

void dump_trajectory_step(const std::string& dir, const std::string& image_id,
                          const TrajectoryStep& step, const AttackConfig& cfg) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const std::string stem = image_id + "__t" + std::to_string(step.t);
  io::write_npy_gz((fs::path(dir) / (stem + ".npy.gz")).string(), step.logits);
  nlohmann::json side = {{"image_id", image_id},
                         {"t", step.t},
                         {"step", cfg.step},
                         {"seed", cfg.seed},
                         {"shape", {step.logits.c(), step.logits.h(), step.logits.w()}}};
  std::ofstream((fs::path(dir) / (stem + ".json")).string()) << side.dump(2) << '\n';
}

}  // namespace sitta::attacks
