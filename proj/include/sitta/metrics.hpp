#ifndef SITTA_METRICS_HPP_
#define SITTA_METRICS_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "sitta/tensor.hpp"

namespace sitta::metrics {

/// Per-image confusion summary. Counts from several images merge by addition.
struct PerImageCounts {
  std::vector<std::int64_t> intersection;
  std::vector<std::int64_t> union_;
  std::vector<std::int64_t> pred;
  std::vector<std::int64_t> gt;
  std::int64_t correct = 0;
  std::int64_t total = 0;

  explicit PerImageCounts(int num_classes = 0)
      : intersection(num_classes, 0), union_(num_classes, 0),
        pred(num_classes, 0), gt(num_classes, 0) {}

  int num_classes() const { return static_cast<int>(intersection.size()); }
  /// Class k occurs in the prediction or the ground truth.
  bool present(int k) const { return pred[k] > 0 || gt[k] > 0; }
  double iou(int k) const {
    return union_[k] > 0 ? static_cast<double>(intersection[k]) / union_[k] : 0.0;
  }

  PerImageCounts& operator+=(const PerImageCounts& other);
};

/// Ignored pixels (ignore_label in gt) are excluded from every count.
PerImageCounts confusion_counts(const LabelMask& pred, const LabelMask& gt,
                                int num_classes,
                                std::uint8_t ignore_label = kIgnoreLabel);

/// Dataset mIoU in percent over classes with nonzero aggregate union.
double miou(std::span<const PerImageCounts> counts);

/// Class-centric per-image mIoU in percent.
double miou_c(std::span<const PerImageCounts> counts);

/// Image-centric mIoU of one image in percent; nullopt when no class is
/// present (every pixel ignored).
std::optional<double> miou_i(const PerImageCounts& counts);

/// Mean of miou_i over images; images without classes are skipped with a
/// warning on stderr.
double miou_i_mean(std::span<const PerImageCounts> counts);

double mdice(std::span<const PerImageCounts> counts);
double pixel_accuracy(std::span<const PerImageCounts> counts);

/// Share of the remaining error removed by adaptation, in percent.
double error_reduction(double na, double tta);

}  // namespace sitta::metrics

#endif  // SITTA_METRICS_HPP_
