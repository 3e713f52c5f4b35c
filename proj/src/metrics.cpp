#include "sitta/metrics.hpp"

#include <iostream>
#include <stdexcept>

namespace sitta::metrics {

PerImageCounts& PerImageCounts::operator+=(const PerImageCounts& other) {
  if (other.num_classes() != num_classes()) {
    throw std::invalid_argument("PerImageCounts: class count mismatch");
  }
  for (int k = 0; k < num_classes(); ++k) {
    intersection[k] += other.intersection[k];
    union_[k] += other.union_[k];
    pred[k] += other.pred[k];
    gt[k] += other.gt[k];
  }
  correct += other.correct;
  total += other.total;
  return *this;
}

PerImageCounts confusion_counts(const LabelMask& pred, const LabelMask& gt,
                                int num_classes, std::uint8_t ignore_label) {
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols()) {
    throw std::invalid_argument("confusion_counts: shape mismatch");
  }
  PerImageCounts out(num_classes);
  for (Eigen::Index i = 0; i < gt.size(); ++i) {
    const int g = gt.data()[i];
    if (g == ignore_label) continue;
    const int p = pred.data()[i];
    if (g >= num_classes || p >= num_classes) {
      throw std::invalid_argument("confusion_counts: label outside [0, C)");
    }
    ++out.pred[p];
    ++out.gt[g];
    ++out.total;
    if (p == g) {
      ++out.intersection[p];
      ++out.correct;
    }
  }
  for (int k = 0; k < num_classes; ++k) {
    out.union_[k] = out.pred[k] + out.gt[k] - out.intersection[k];
  }
  return out;
}

namespace {

PerImageCounts sum_counts(std::span<const PerImageCounts> counts) {
  if (counts.empty()) throw std::invalid_argument("metrics: no images");
  PerImageCounts total(counts.front().num_classes());
  for (const auto& c : counts) total += c;
  return total;
}

}  // namespace

double miou(std::span<const PerImageCounts> counts) {
  const auto total = sum_counts(counts);
  double acc = 0;
  int classes = 0;
  for (int k = 0; k < total.num_classes(); ++k) {
    if (total.union_[k] == 0) continue;
    acc += total.iou(k);
    ++classes;
  }
  if (classes == 0) throw std::invalid_argument("miou: no class with nonzero union");
  return 100.0 * acc / classes;
}

double miou_c(std::span<const PerImageCounts> counts) {
  if (counts.empty()) throw std::invalid_argument("miou_c: no images");
  const int num_classes = counts.front().num_classes();
  double acc = 0;
  int classes = 0;
  for (int k = 0; k < num_classes; ++k) {
    double sum = 0;
    int images = 0;
    for (const auto& c : counts) {
      if (!c.present(k)) continue;
      sum += c.iou(k);
      ++images;
    }
    if (images == 0) continue;
    acc += sum / images;
    ++classes;
  }
  if (classes == 0) throw std::invalid_argument("miou_c: every I_k is empty");
  return 100.0 * acc / classes;
}

std::optional<double> miou_i(const PerImageCounts& counts) {
  double acc = 0;
  int classes = 0;
  for (int k = 0; k < counts.num_classes(); ++k) {
    if (!counts.present(k)) continue;
    acc += counts.iou(k);
    ++classes;
  }
  if (classes == 0) return std::nullopt;
  return 100.0 * acc / classes;
}

double miou_i_mean(std::span<const PerImageCounts> counts) {
  double acc = 0;
  int images = 0;
  for (std::size_t n = 0; n < counts.size(); ++n) {
    const auto v = miou_i(counts[n]);
    if (!v) {
      std::cerr << "warning: image " << n << " has no labelled classes, skipped\n";
      continue;
    }
    acc += *v;
    ++images;
  }
  if (images == 0) throw std::invalid_argument("miou_i_mean: no scorable image");
  return acc / images;
}

double mdice(std::span<const PerImageCounts> counts) {
  const auto total = sum_counts(counts);
  double acc = 0;
  int classes = 0;
  for (int k = 0; k < total.num_classes(); ++k) {
    const auto denom = total.pred[k] + total.gt[k];
    if (denom == 0) continue;
    acc += 2.0 * static_cast<double>(total.intersection[k]) / denom;
    ++classes;
  }
  if (classes == 0) throw std::invalid_argument("mdice: no class with nonzero union");
  return 100.0 * acc / classes;
}

double pixel_accuracy(std::span<const PerImageCounts> counts) {
  const auto total = sum_counts(counts);
  if (total.total == 0) throw std::invalid_argument("pixel_accuracy: no pixels");
  return 100.0 * static_cast<double>(total.correct) / total.total;
}

double error_reduction(double na, double tta) {
  if (!(na < 100.0)) {
    throw std::invalid_argument("error_reduction: baseline must be below 100");
  }
  return (tta - na) / (100.0 - na) * 100.0;
}

}  // namespace sitta::metrics
