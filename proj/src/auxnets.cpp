#include "sitta/auxnets.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

#include "sitta/losses.hpp"
#include "sitta/nn/checkpoint.hpp"
#include "sitta/nn/optim.hpp"
#include "sitta/ops.hpp"

namespace sitta::auxnets {
namespace {

constexpr const char* kRefinerArch = "unet-refiner";
constexpr const char* kEstimatorArch = "diou-estimator";

void check_channels(int expected, const LogitMask& logits, const char* who) {
  if (logits.c() != expected) {
    throw std::invalid_argument(std::string(who) + ": expected " + std::to_string(expected) +
                                " channels, got " + std::to_string(logits.c()));
  }
}

template <typename Net>
void save_net(Net& net, const std::string& arch, const std::string& path) {
  nn::Checkpoint ckpt;
  ckpt.meta["architecture"] = arch;
  ckpt.meta["num_classes"] = std::to_string(net.num_classes());
  ckpt.meta["width"] = std::to_string(net.width());
  nn::store(ckpt, net.parameters(), net.buffers());
  ckpt.save(path);
}

std::pair<int, int> read_header(const nn::Checkpoint& ckpt, const std::string& arch,
                                const std::string& path) {
  const auto it = ckpt.meta.find("architecture");
  if (it == ckpt.meta.end() || it->second != arch) {
    throw std::runtime_error(path + ": not a " + arch + " checkpoint");
  }
  return {std::stoi(ckpt.meta.at("num_classes")), std::stoi(ckpt.meta.at("width"))};
}

void check_pairs(const std::vector<RefinerPair>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("train_refiner: no pairs");
  const auto& first = pairs.front().corrupted;
  for (const auto& p : pairs) {
    if (p.corrupted.n() != 1 || p.corrupted.c() != first.c() || p.corrupted.h() != first.h() ||
        p.corrupted.w() != first.w() || p.target.rows() != first.h() ||
        p.target.cols() != first.w()) {
      throw std::invalid_argument("train_refiner: inconsistent pair shapes");
    }
  }
}

// Mean CE of softmax(logits) against labels and its gradient wrt the logits.
double ce_with_grad(const TensorF& logits, const std::vector<const LabelMask*>& targets,
                    TensorF& dlogits) {
  const TensorF probs = softmax(logits);
  dlogits = probs;
  double loss = 0;
  std::int64_t valid = 0;
  for (int b = 0; b < logits.n(); ++b) {
    const LabelMask& m = *targets[b];
    auto d = dlogits.sample(b);
    const auto p = probs.sample(b);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const int k = m.data()[i];
      if (k == kIgnoreLabel) {
        d.col(i).setZero();
        continue;
      }
      loss -= std::log(std::max(p(k, i), static_cast<float>(losses::kProbFloor)));
      d(k, i) -= 1.0f;
      ++valid;
    }
  }
  if (valid == 0) {
    dlogits.flat().setZero();
    return 0;
  }
  dlogits.flat() /= static_cast<float>(valid);
  return loss / valid;
}

template <typename T>
TensorF stack(const std::vector<T>& items, const std::vector<std::size_t>& idx,
              std::size_t start, int count, const LogitMask T::*field) {
  const LogitMask& first = items[idx[start]].*field;
  TensorF batch(count, first.c(), first.h(), first.w());
  for (int b = 0; b < count; ++b) batch.set_slice(b, items[idx[start + b]].*field);
  return batch;
}

}  // namespace

std::string to_string(TargetKind kind) {
  return kind == TargetKind::kPredictions ? "predictions" : "ground-truth";
}

TargetKind parse_target_kind(const std::string& text) {
  if (text == "predictions") return TargetKind::kPredictions;
  if (text == "ground-truth" || text == "gt") return TargetKind::kGroundTruth;
  throw std::invalid_argument("unknown refiner target kind '" + text + "'");
}

// ---------------------------------------------------------------------------

ProbMask IdentityRefiner::refine(const LogitMask& logits) {
  check_channels(num_classes_, logits, "refine");
  return softmax(logits);
}

ProbMask UNetRefiner::refine(const LogitMask& logits) {
  check_channels(net_.num_classes(), logits, "refine");
  net_.set_training(false);
  return softmax(net_.forward(logits));
}

void UNetRefiner::save(const std::string& path) { save_net(net_, kRefinerArch, path); }

std::unique_ptr<UNetRefiner> UNetRefiner::load(const std::string& path) {
  const auto ckpt = nn::Checkpoint::load(path);
  const auto [classes, width] = read_header(ckpt, kRefinerArch, path);
  auto out = std::make_unique<UNetRefiner>(classes, width);
  nn::restore(ckpt, out->net_.parameters(), out->net_.buffers());
  return out;
}

double DeepIoUEstimator::predict(const LogitMask& logits) {
  check_channels(net_.num_classes(), logits, "predict_iou_loss");
  return net_.forward(logits).flat()[0];
}

double DeepIoUEstimator::predict_with_grad(const LogitMask& logits, LogitMask& grad) {
  const double value = predict(logits);
  TensorF dy(1, 1, 1, 1);
  dy.flat()[0] = 1.0f;
  grad = net_.backward(dy, false);
  return value;
}

void DeepIoUEstimator::save(const std::string& path) { save_net(net_, kEstimatorArch, path); }

std::unique_ptr<DeepIoUEstimator> DeepIoUEstimator::load(const std::string& path) {
  const auto ckpt = nn::Checkpoint::load(path);
  const auto [classes, width] = read_header(ckpt, kEstimatorArch, path);
  auto out = std::make_unique<DeepIoUEstimator>(classes, width);
  nn::restore(ckpt, out->net_.parameters(), out->net_.buffers());
  return out;
}

// ---------------------------------------------------------------------------

std::vector<RefinerPair> gen_refiner_pairs(core::ModelAdapter& model,
                                           const std::vector<data::Sample>& images,
                                           const attacks::AttackConfig& attack,
                                           const std::vector<int>& harvest,
                                           TargetKind target_kind) {
  if (harvest.empty()) throw std::invalid_argument("gen_refiner_pairs: empty harvest set");
  for (int t : harvest) {
    if (t < 0 || t > attack.steps) {
      throw std::invalid_argument("gen_refiner_pairs: harvest iteration " + std::to_string(t) +
                                  " outside 0.." + std::to_string(attack.steps));
    }
  }
  std::vector<RefinerPair> out;
  for (const auto& sample : images) {
    if (target_kind == TargetKind::kGroundTruth && !sample.mask) {
      throw std::invalid_argument("gen_refiner_pairs: no ground truth for " + sample.id);
    }
    const LogitMask clean = model.forward(sample.image);
    const ProbMask probs = softmax(clean);
    const LabelMask target =
        target_kind == TargetKind::kGroundTruth ? *sample.mask : argmax(probs);
    const auto trajectory =
        attack.steps > 0 ? attacks::pgd_attack(model, sample.image, attacks::inverted_target(probs), attack)
                         : std::vector<attacks::TrajectoryStep>{};
    for (int t : harvest) {
      RefinerPair pair;
      pair.corrupted = t == 0 ? clean : trajectory[t - 1].logits;
      pair.target = target;
      pair.target_kind = target_kind;
      pair.source_id = sample.source_id.empty() ? sample.id : sample.source_id;
      pair.t = t;
      out.push_back(std::move(pair));
    }
  }
  return out;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_by_source(
    const std::vector<std::string>& source_ids, double val_fraction, std::uint64_t seed) {
  std::vector<std::string> unique(source_ids.begin(), source_ids.end());
  std::sort(unique.begin(), unique.end());
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
  std::mt19937_64 rng(seed);
  std::shuffle(unique.begin(), unique.end(), rng);
  std::size_t n_val = static_cast<std::size_t>(std::round(val_fraction * unique.size()));
  if (val_fraction > 0 && n_val == 0 && unique.size() >= 2) n_val = 1;
  if (n_val >= unique.size()) n_val = unique.size() - 1;
  const std::set<std::string> val(unique.begin(), unique.begin() + n_val);
  std::vector<std::size_t> train_idx, val_idx;
  for (std::size_t i = 0; i < source_ids.size(); ++i) {
    (val.count(source_ids[i]) ? val_idx : train_idx).push_back(i);
  }
  return {train_idx, val_idx};
}

TrainedRefiner train_refiner(const std::vector<RefinerPair>& pairs,
                             const AuxTrainOptions& options) {
  check_pairs(pairs);
  std::vector<std::string> sources;
  for (const auto& p : pairs) sources.push_back(p.source_id);
  auto [train_idx, val_idx] = split_by_source(sources, options.val_fraction, options.seed);

  TrainedRefiner out;
  out.refiner = std::make_unique<UNetRefiner>(pairs.front().corrupted.c(), options.width);
  auto& net = out.refiner->net();
  net.init(options.seed);
  nn::AdamW<float> opt(net.parameters(), options.lr, 1e-4);
  std::mt19937_64 rng(options.seed ^ 0xA11CEULL);

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), rng);
    net.set_training(true);
    double sum = 0;
    int batches = 0;
    for (std::size_t start = 0; start < train_idx.size(); start += options.batch_size) {
      const int bs = static_cast<int>(std::min<std::size_t>(options.batch_size, train_idx.size() - start));
      const TensorF batch = stack(pairs, train_idx, start, bs, &RefinerPair::corrupted);
      std::vector<const LabelMask*> targets;
      for (int b = 0; b < bs; ++b) targets.push_back(&pairs[train_idx[start + b]].target);
      const TensorF logits = net.forward(batch);
      TensorF dlogits;
      sum += ce_with_grad(logits, targets, dlogits);
      ++batches;
      opt.zero_grad();
      net.backward(dlogits);
      opt.step();
    }
    out.curve.train_loss.push_back(batches ? sum / batches : 0.0);
    if (!val_idx.empty()) {
      net.set_training(false);
      double vsum = 0;
      for (std::size_t i : val_idx) {
        TensorF d;
        vsum += ce_with_grad(net.forward(pairs[i].corrupted), {&pairs[i].target}, d);
      }
      out.curve.val_loss.push_back(vsum / val_idx.size());
    }
  }
  net.set_training(false);
  return out;
}

ProbMask refine(MaskRefiner& refiner, const LogitMask& logits) {
  return refiner.refine(logits);
}

std::vector<IoUPair> make_iou_pairs(const std::vector<RefinerPair>& pairs) {
  std::vector<IoUPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    const ProbMask probs = softmax(p.corrupted);
    const TensorF target = one_hot<float>(p.target, p.corrupted.c());
    LabelMask valid = p.target;
    losses::PixelWeights<float> w(valid.rows(), valid.cols());
    for (Eigen::Index i = 0; i < valid.size(); ++i) {
      w.data()[i] = valid.data()[i] == kIgnoreLabel ? 0.0f : 1.0f;
    }
    IoUPair q;
    q.mask = p.corrupted;
    q.label = losses::soft_iou_loss(probs, target, &w).value;
    q.source_id = p.source_id;
    out.push_back(std::move(q));
  }
  return out;
}

TrainedEstimator train_diou(const std::vector<IoUPair>& pairs, const AuxTrainOptions& options) {
  if (pairs.empty()) throw std::invalid_argument("train_diou: no pairs");
  for (const auto& p : pairs) {
    if (!(p.label >= 0.0 && p.label <= 1.0)) {
      throw std::invalid_argument("train_diou: label " + std::to_string(p.label) +
                                  " outside [0,1]");
    }
    if (!p.mask.same_shape(pairs.front().mask)) {
      throw std::invalid_argument("train_diou: inconsistent mask shapes");
    }
  }
  std::vector<std::string> sources;
  for (const auto& p : pairs) sources.push_back(p.source_id);
  auto [train_idx, val_idx] = split_by_source(sources, options.val_fraction, options.seed);

  TrainedEstimator out;
  out.estimator = std::make_unique<DeepIoUEstimator>(pairs.front().mask.c(), options.width);
  auto& net = out.estimator->net();
  net.init(options.seed);
  nn::AdamW<float> opt(net.parameters(), options.lr, 1e-4);
  std::mt19937_64 rng(options.seed ^ 0xD10ULL);

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), rng);
    double sum = 0;
    for (std::size_t start = 0; start < train_idx.size(); start += options.batch_size) {
      const int bs = static_cast<int>(std::min<std::size_t>(options.batch_size, train_idx.size() - start));
      const TensorF batch = stack(pairs, train_idx, start, bs, &IoUPair::mask);
      const TensorF pred = net.forward(batch);
      TensorF dy(bs, 1, 1, 1);
      for (int b = 0; b < bs; ++b) {
        const double err = pred.flat()[b] - pairs[train_idx[start + b]].label;
        sum += err * err;
        dy.flat()[b] = static_cast<float>(2.0 * err / bs);
      }
      opt.zero_grad();
      net.backward(dy, true);
      opt.step();
    }
    out.curve.train_loss.push_back(train_idx.empty() ? 0.0 : sum / train_idx.size());
    if (!val_idx.empty()) {
      double vsum = 0;
      for (std::size_t i : val_idx) {
        const double err = net.forward(pairs[i].mask).flat()[0] - pairs[i].label;
        vsum += err * err;
      }
      out.curve.val_loss.push_back(vsum / val_idx.size());
    }
  }
  return out;
}

double predict_iou_loss(IoUEstimator& estimator, const LogitMask& logits) {
  return estimator.predict(logits);
}

}  // namespace sitta::auxnets
