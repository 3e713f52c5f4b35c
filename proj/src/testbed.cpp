#include "sitta/testbed.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <stdexcept>

#include "sitta/metrics.hpp"
#include "sitta/nn/optim.hpp"
#include "sitta/ops.hpp"

namespace sitta::testbed {
namespace {

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double i = std::floor(h * 6.0);
  const double f = h * 6.0 - i;
  const double p = v * (1 - s), q = v * (1 - f * s), t = v * (1 - (1 - f) * s);
  switch (static_cast<int>(i) % 6) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

constexpr std::array<double, 3> kClassHue = {0.0, 0.33, 0.62};

struct Shape {
  int cls;
  double cx, cy, r;
  double aspect, angle;
};

bool inside(const Shape& s, double x, double y) {
  const double dx = x - s.cx, dy = y - s.cy;
  switch (s.cls) {
    case 1:
      return dx * dx + dy * dy <= s.r * s.r;
    case 2: {
      const double hw = s.r * s.aspect, hh = s.r / s.aspect;
      return std::abs(dx) <= hw && std::abs(dy) <= hh;
    }
    default: {
      std::array<double, 6> v{};
      for (int k = 0; k < 3; ++k) {
        const double a = s.angle + k * 2.0 * M_PI / 3.0;
        v[2 * k] = s.cx + s.r * std::cos(a);
        v[2 * k + 1] = s.cy + s.r * std::sin(a);
      }
      auto edge = [&](int a, int b) {
        return (v[2 * b] - v[2 * a]) * (y - v[2 * a + 1]) -
               (v[2 * b + 1] - v[2 * a + 1]) * (x - v[2 * a]);
      };
      const double e0 = edge(0, 1), e1 = edge(1, 2), e2 = edge(2, 0);
      return (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
    }
  }
}

data::Sample make_sample(int index, const ShapesSpec& spec, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int size = spec.size;
  data::Sample s;
  char id[32];
  std::snprintf(id, sizeof(id), "shape_%05d", index);
  s.id = id;
  s.source_id = id;
  s.image = Image(1, 3, size, size);
  LabelMask mask = LabelMask::Zero(size, size);

  const auto bg = hsv_to_rgb(u(rng), 0.25 * u(rng), 0.25 + 0.5 * u(rng));
  const double gx = 0.15 * (u(rng) - 0.5), gy = 0.15 * (u(rng) - 0.5);
  std::normal_distribution<double> tex(0.0, spec.texture);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double shade = gx * (x / double(size) - 0.5) + gy * (y / double(size) - 0.5);
      for (int c = 0; c < 3; ++c) {
        s.image(0, c, y, x) = static_cast<float>(std::clamp(bg[c] + shade + tex(rng), 0.0, 1.0));
      }
    }

  std::uniform_int_distribution<int> count(spec.min_shapes, spec.max_shapes);
  std::uniform_int_distribution<int> cls(1, spec.num_classes - 1);
  const int n_shapes = count(rng);
  std::vector<Shape> shapes;
  for (int k = 0; k < n_shapes; ++k) {
    Shape sh{cls(rng), 0, 0, 0, 0.7 + 0.6 * u(rng), 2 * M_PI * u(rng)};
    // Rejection-sample a spot whose bounding circle does not touch the others.
    for (int attempt = 0; attempt < 200; ++attempt) {
      sh.r = size * (spec.min_radius + (spec.max_radius - spec.min_radius) * u(rng));
      const double reach = sh.r * std::max(sh.aspect, 1.0 / sh.aspect) * 1.42;
      sh.cx = reach + (size - 2 * reach) * u(rng);
      sh.cy = reach + (size - 2 * reach) * u(rng);
      bool clear = true;
      for (const auto& o : shapes) {
        const double oreach = o.r * std::max(o.aspect, 1.0 / o.aspect) * 1.42;
        if (std::hypot(sh.cx - o.cx, sh.cy - o.cy) < reach + oreach + 2) clear = false;
      }
      if (clear) {
        shapes.push_back(sh);
        break;
      }
    }
  }
  for (const auto& sh : shapes) {
    const double hue = kClassHue[(sh.cls - 1) % 3] + spec.hue_jitter * (2 * u(rng) - 1);
    const auto col = hsv_to_rgb(hue, 0.55 + 0.35 * u(rng), 0.55 + 0.4 * u(rng));
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        if (!inside(sh, x + 0.5, y + 0.5)) continue;
        mask(y, x) = static_cast<std::uint8_t>(sh.cls);
        for (int c = 0; c < 3; ++c) {
          s.image(0, c, y, x) = static_cast<float>(std::clamp(col[c] + tex(rng), 0.0, 1.0));
        }
      }
  }
  s.mask = std::move(mask);
  return s;
}

}  // namespace

double expected_class_presence(const ShapesSpec& spec) {
  const int fg = spec.num_classes - 1;
  const double miss = (fg - 1.0) / fg;
  double absent = 0;
  for (int k = spec.min_shapes; k <= spec.max_shapes; ++k) absent += std::pow(miss, k);
  return 1.0 - absent / (spec.max_shapes - spec.min_shapes + 1);
}

std::vector<data::Sample> make_shapes_dataset(int n, const ShapesSpec& spec) {
  if (n < 1) throw std::invalid_argument("make_shapes_dataset: n must be >= 1");
  if (spec.num_classes < 2) throw std::invalid_argument("make_shapes_dataset: need >= 2 classes");
  std::mt19937_64 rng(spec.seed);
  std::vector<data::Sample> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back(make_sample(i, spec, rng));
  return out;
}

TrainedSegmenter train_toy_segmenter(const std::vector<data::Sample>& dataset,
                                     const TrainOptions& options) {
  if (dataset.empty() || !dataset.front().mask) {
    throw std::invalid_argument("train_toy_segmenter: labelled dataset required");
  }
  int num_classes = 0;
  for (const auto& s : dataset) {
    for (Eigen::Index i = 0; i < s.mask->size(); ++i) {
      const int k = s.mask->data()[i];
      if (k != kIgnoreLabel) num_classes = std::max(num_classes, k + 1);
    }
  }
  num_classes = std::max(num_classes, 2);
  TrainedSegmenter out;
  out.model = core::make_toy_segmenter(num_classes, options.width, true, options.seed);
  auto& model = *out.model;
  model.set_training(true);
  nn::AdamW<float> opt(model.parameters(), options.lr, 1e-4);
  std::mt19937_64 rng(options.seed ^ 0x5EEDULL);
  std::vector<int> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  const int h = dataset.front().image.h(), w = dataset.front().image.w();

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const int bs = static_cast<int>(std::min<std::size_t>(options.batch_size, order.size() - start));
      TensorF batch(bs, 3, h, w);
      for (int b = 0; b < bs; ++b) batch.set_slice(b, dataset[order[start + b]].image);
      const TensorF logits = model.forward(batch);
      const TensorF probs = softmax(logits);
      TensorF dlogits = probs;
      double loss = 0;
      std::int64_t valid = 0;
      for (int b = 0; b < bs; ++b) {
        const LabelMask& m = *dataset[order[start + b]].mask;
        auto d = dlogits.sample(b);
        const auto p = probs.sample(b);
        for (Eigen::Index i = 0; i < m.size(); ++i) {
          const int k = m.data()[i];
          if (k == kIgnoreLabel) {
            d.col(i).setZero();
            continue;
          }
          loss -= std::log(std::max(p(k, i), 1e-8f));
          d(k, i) -= 1.0f;
          ++valid;
        }
      }
      if (valid == 0) continue;
      dlogits.flat() /= static_cast<float>(valid);
      opt.zero_grad();
      model.backward(dlogits, {true, false});
      opt.step();
      loss_sum += loss / valid;
      ++batches;
    }
    out.epoch_loss.push_back(batches ? loss_sum / batches : 0.0);
  }
  model.set_training(false);
  return out;
}

double evaluate_miou_i(core::ModelAdapter& model, const std::vector<data::Sample>& samples) {
  std::vector<metrics::PerImageCounts> counts;
  for (const auto& s : samples) {
    if (!s.mask) continue;
    const LabelMask pred = argmax(model.forward(s.image));
    counts.push_back(metrics::confusion_counts(pred, *s.mask, model.num_classes()));
  }
  return metrics::miou_i_mean(counts);
}

}  // namespace sitta::testbed
