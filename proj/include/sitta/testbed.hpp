#ifndef SITTA_TESTBED_HPP_
#define SITTA_TESTBED_HPP_

#include <cstdint>
#include <memory>
#include <vector>

#include "sitta/core.hpp"
#include "sitta/dataset.hpp"

namespace sitta::testbed {

/// Synthetic shapes: class 0 background, 1 circle, 2 rectangle, 3 triangle.
struct ShapesSpec {
  int size = 96;
  int num_classes = 4;
  int min_shapes = 1;
  int max_shapes = 3;
  double min_radius = 0.10;  // fraction of the image side
  double max_radius = 0.22;
  double hue_jitter = 0.06;  // around each class's base hue, in [0,1) hue units
  double texture = 0.04;     // amplitude of per-pixel texture noise
  std::uint64_t seed = 0;
};

/// Probability that a given foreground class appears in an image when shape
/// types are drawn uniformly and shapes never fully cover one another.
double expected_class_presence(const ShapesSpec& spec);

/// n samples with ids "shape_00000", ...; deterministic given spec.seed.
std::vector<data::Sample> make_shapes_dataset(int n, const ShapesSpec& spec);

struct TrainOptions {
  int epochs = 12;
  double lr = 3e-3;
  int batch_size = 8;
  int width = 8;
  std::uint64_t seed = 0;
};

struct TrainedSegmenter {
  std::unique_ptr<core::ModelAdapter> model;
  std::vector<double> epoch_loss;  // mean training CE per epoch
};

/// Source pretraining of the toy segmenter (AdamW, pixel-wise CE, batch
/// statistics). The returned model is in evaluation mode.
TrainedSegmenter train_toy_segmenter(const std::vector<data::Sample>& dataset,
                                     const TrainOptions& options);

/// Mean per-image mIoU (percent) of the model's argmax against the masks.
double evaluate_miou_i(core::ModelAdapter& model, const std::vector<data::Sample>& samples);

}  // namespace sitta::testbed

#endif  // SITTA_TESTBED_HPP_
