#ifndef SITTA_CORRUPTIONS_HPP_
#define SITTA_CORRUPTIONS_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "sitta/tensor.hpp"

namespace sitta::corruptions {

enum class CorruptionKind {
  kBrightness,
  kContrast,
  kFrost,
  kFog,
  kGaussianNoise,
  kShotNoise,
  kSpatter,
  kDefocusBlur,
  kGaussianBlur,
  kJpeg,
  kIdentity,
};

std::string to_string(CorruptionKind kind);
/// Accepts the hyphenated names used on disk ("gaussian-noise", ...).
CorruptionKind parse_kind(const std::string& name);

/// All ten corruptions plus identity.
const std::vector<CorruptionKind>& all_kinds();
/// The nine corruptions used for corpus derivation (gaussian blur left out)
/// plus identity.
const std::vector<CorruptionKind>& default_kinds();
const std::vector<int>& default_levels();

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::kIdentity;
  int level = 1;  // severity index 1..5
  std::uint64_t seed = 0;
};

/// Frozen severity parameters (b1, b2, ...) for a kind at a level in 1..5.
std::vector<double> severity(CorruptionKind kind, int level);

/**
 * Applies one corruption to a 1x3xHxW image with values in [0,1]. The output
 * is always clipped to [0,1] and depends only on (image, spec).
 */
Image apply_corruption(const Image& image, const CorruptionSpec& spec);

/**
 * Diamond-square heightmap of side `size` = 2^k + 1, rescaled to [0,1].
 * Corner values are drawn uniformly; each subdivision level adds uniform
 * displacement in [-a, a] where a starts at `wibble` and is divided by
 * `decay` per level. With wibble = 0 the result is the bilinear
 * interpolation of the corners.
 */
RowMatrix<double> diamond_square(int size, double wibble, std::uint64_t seed,
                                 double decay = 2.0);

/// Procedural frost texture (3xSxS, values in [0,1]); `which` in [0, 3).
const Image& frost_template(int which);

/// Separable Gaussian blur with reflected borders, per channel.
Image gaussian_blur(const Image& image, double sigma);

struct SourceImage {
  std::string id;
  std::string path;
};

struct CorpusEntry {
  std::string id;         // "<source>__<kind>__L<level>"
  std::string source_id;
  CorruptionKind kind = CorruptionKind::kIdentity;
  int level = 0;
  std::uint64_t seed = 0;
  std::string path;         // relative to the corpus root
  std::string source_path;
};

struct CorpusIndex {
  std::vector<CorpusEntry> entries;

  void save_jsonl(const std::string& path) const;
  static CorpusIndex load_jsonl(const std::string& path);
};

/**
 * One entry per (image, kind, level). Identity entries are replicated per
 * level so the entry count is |images| x |kinds| x |levels|.
 */
CorpusIndex derive_corrupted_dataset(const std::vector<SourceImage>& images,
                                     const std::vector<CorruptionKind>& kinds,
                                     const std::vector<int>& levels,
                                     std::uint64_t seed);

/// Writes every entry's image as an 8-bit PNG under `root` plus index.jsonl.
void materialize_corpus(const CorpusIndex& index, const std::string& root);

}  // namespace sitta::corruptions

#endif  // SITTA_CORRUPTIONS_HPP_
