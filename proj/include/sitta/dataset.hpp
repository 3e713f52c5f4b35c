#ifndef SITTA_DATASET_HPP_
#define SITTA_DATASET_HPP_

#include <optional>
#include <string>
#include <vector>

#include "sitta/corruptions.hpp"
#include "sitta/tensor.hpp"

namespace sitta::data {

/// One image with its (optional) ground truth and corruption provenance.
struct Sample {
  std::string id;
  std::string source_id;
  corruptions::CorruptionKind kind = corruptions::CorruptionKind::kIdentity;
  int level = 0;
  Image image;
  std::optional<LabelMask> mask;
};

/**
 * Loads a dataset directory laid out as
 *
 *   index.jsonl            one CorpusEntry per line
 *   images/<id>.png        8-bit RGB
 *   masks/<source_id>.png  8-bit class indices, 255 = ignore (optional)
 */
std::vector<Sample> load_dataset(const std::string& root);

/// Writes images, masks and index.jsonl for clean samples (kind identity,
/// level 0).
void write_dataset(const std::string& root, const std::vector<Sample>& samples);

/// Entries of a dataset as corruption sources (absolute image paths).
std::vector<corruptions::SourceImage> source_images(const std::string& root);

/// Copies every source mask referenced by `index` from `dataset_root/masks`
/// into `corpus_root/masks`.
void copy_masks(const corruptions::CorpusIndex& index, const std::string& dataset_root,
                const std::string& corpus_root);

}  // namespace sitta::data

#endif  // SITTA_DATASET_HPP_
