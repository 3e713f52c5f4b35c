#include "sitta/dataset.hpp"

#include <filesystem>
#include <set>
#include <stdexcept>

#include "sitta/image_io.hpp"

namespace sitta::data {

namespace fs = std::filesystem;

std::vector<Sample> load_dataset(const std::string& root) {
  const auto index = corruptions::CorpusIndex::load_jsonl((fs::path(root) / "index.jsonl").string());
  std::vector<Sample> out;
  out.reserve(index.entries.size());
  for (const auto& e : index.entries) {
    Sample s;
    s.id = e.id;
    s.source_id = e.source_id;
    s.kind = e.kind;
    s.level = e.level;
    s.image = io::read_image_png((fs::path(root) / e.path).string());
    const auto mask_path = fs::path(root) / "masks" / (e.source_id + ".png");
    if (fs::exists(mask_path)) {
      s.mask = io::read_mask_png(mask_path.string());
      if (s.mask->rows() != s.image.h() || s.mask->cols() != s.image.w()) {
        throw std::runtime_error("mask size differs from image for " + e.id);
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

void write_dataset(const std::string& root, const std::vector<Sample>& samples) {
  fs::create_directories(fs::path(root) / "images");
  fs::create_directories(fs::path(root) / "masks");
  corruptions::CorpusIndex index;
  for (const auto& s : samples) {
    corruptions::CorpusEntry e;
    e.id = s.id;
    e.source_id = s.source_id.empty() ? s.id : s.source_id;
    e.kind = s.kind;
    e.level = s.level;
    e.path = "images/" + s.id + ".png";
    e.source_path = e.path;
    io::write_image_png((fs::path(root) / e.path).string(), s.image);
    if (s.mask) {
      io::write_mask_png((fs::path(root) / "masks" / (e.source_id + ".png")).string(), *s.mask);
    }
    index.entries.push_back(std::move(e));
  }
  index.save_jsonl((fs::path(root) / "index.jsonl").string());
}

std::vector<corruptions::SourceImage> source_images(const std::string& root) {
  const auto index = corruptions::CorpusIndex::load_jsonl((fs::path(root) / "index.jsonl").string());
  std::vector<corruptions::SourceImage> out;
  for (const auto& e : index.entries) {
    out.push_back({e.source_id, fs::absolute(fs::path(root) / e.path).string()});
  }
  return out;
}

void copy_masks(const corruptions::CorpusIndex& index, const std::string& dataset_root,
                const std::string& corpus_root) {
  fs::create_directories(fs::path(corpus_root) / "masks");
  std::set<std::string> done;
  for (const auto& e : index.entries) {
    if (!done.insert(e.source_id).second) continue;
    const auto src = fs::path(dataset_root) / "masks" / (e.source_id + ".png");
    if (!fs::exists(src)) continue;
    fs::copy_file(src, fs::path(corpus_root) / "masks" / (e.source_id + ".png"),
                  fs::copy_options::overwrite_existing);
  }
}

}  // namespace sitta::data
