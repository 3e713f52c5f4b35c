#ifndef SITTA_TESTS_HELPERS_HPP_
#define SITTA_TESTS_HELPERS_HPP_

#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "sitta/core.hpp"
#include "sitta/corruptions.hpp"
#include "sitta/dataset.hpp"
#include "sitta/testbed.hpp"

namespace sitta::test {

inline std::string cache_dir() { return SITTA_TEST_CACHE; }

/// The shared segmenter trained by the pretrained fixture.
inline std::unique_ptr<core::ModelAdapter> pretrained() {
  return core::load_model(cache_dir() + "/segmenter.ckpt", "toy-segmenter");
}

/// Held-out shapes (seed differs from the training set).
inline std::vector<data::Sample> heldout_shapes(int n, std::uint64_t seed = 1000) {
  testbed::ShapesSpec spec;
  spec.seed = seed;
  return testbed::make_shapes_dataset(n, spec);
}

inline std::vector<data::Sample> corrupted(std::vector<data::Sample> samples,
                                           corruptions::CorruptionKind kind, int level) {
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto& s = samples[i];
    s.image = corruptions::apply_corruption(s.image, {kind, level, 77 + i});
    s.source_id = s.id;
    s.id += "__" + corruptions::to_string(kind) + "__L" + std::to_string(level);
    s.kind = kind;
    s.level = level;
  }
  return samples;
}

inline TensorF random_tensor(int n, int c, int h, int w, std::mt19937_64& rng,
                             float lo = -1.0f, float hi = 1.0f) {
  std::uniform_real_distribution<float> u(lo, hi);
  TensorF t(n, c, h, w);
  for (auto& v : t.storage()) v = u(rng);
  return t;
}

/// Fresh scratch directory under the build tree.
inline std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::path(cache_dir()) / "scratch" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace sitta::test

#endif  // SITTA_TESTS_HELPERS_HPP_
