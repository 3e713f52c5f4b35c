#include "sitta/corruptions.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <stdexcept>
#include <tuple>

#include <json.hpp>

#include "sitta/image_io.hpp"

namespace sitta::corruptions {
namespace {

using Kind = CorruptionKind;

const std::vector<std::pair<Kind, std::string>>& kind_names() {
  static const std::vector<std::pair<Kind, std::string>> names = {
      {Kind::kBrightness, "brightness"},        {Kind::kContrast, "contrast"},
      {Kind::kFrost, "frost"},                  {Kind::kFog, "fog"},
      {Kind::kGaussianNoise, "gaussian-noise"}, {Kind::kShotNoise, "shot-noise"},
      {Kind::kSpatter, "spatter"},              {Kind::kDefocusBlur, "defocus-blur"},
      {Kind::kGaussianBlur, "gaussian-blur"},   {Kind::kJpeg, "jpeg"},
      {Kind::kIdentity, "identity"},
  };
  return names;
}

// Severity rows for levels 1..5 (common-corruptions parameterization).
const std::map<Kind, std::array<std::vector<double>, 5>>& severity_table() {
  static const std::map<Kind, std::array<std::vector<double>, 5>> table = {
      {Kind::kBrightness, {{{0.1}, {0.2}, {0.3}, {0.4}, {0.5}}}},
      // b = c - 1 so that b (x - mean) + x == c (x - mean) + mean
      {Kind::kContrast, {{{-0.6}, {-0.7}, {-0.8}, {-0.9}, {-0.95}}}},
      {Kind::kFrost, {{{1.0, 0.4}, {0.8, 0.6}, {0.7, 0.7}, {0.65, 0.7}, {0.6, 0.75}}}},
      // (mixing weight b1, wibble decay b2)
      {Kind::kFog, {{{1.5, 2.0}, {2.0, 2.0}, {2.5, 1.7}, {2.5, 1.5}, {3.0, 1.4}}}},
      {Kind::kGaussianNoise, {{{0.08}, {0.12}, {0.18}, {0.26}, {0.38}}}},
      {Kind::kShotNoise, {{{60}, {25}, {12}, {5}, {3}}}},
      // (loc, scale, blur sigma, threshold, intensity, mud flag)
      {Kind::kSpatter,
       {{{0.65, 0.3, 4, 0.69, 0.6, 0},
         {0.65, 0.3, 3, 0.68, 0.6, 0},
         {0.65, 0.3, 2, 0.68, 0.5, 0},
         {0.65, 0.3, 1, 0.65, 1.5, 1},
         {0.67, 0.4, 1, 0.65, 1.5, 1}}}},
      // (disk radius, alias blur sigma)
      {Kind::kDefocusBlur, {{{3, 0.1}, {4, 0.5}, {6, 0.5}, {8, 0.5}, {10, 0.5}}}},
      {Kind::kGaussianBlur, {{{1}, {2}, {3}, {4}, {6}}}},
      {Kind::kJpeg, {{{25}, {18}, {15}, {10}, {7}}}},
  };
  return table;
}

int reflect(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[i + radius];
  }
  for (double& v : k) v /= sum;
  return k;
}

RowMatrix<double> blur_plane(const RowMatrix<double>& src, double sigma) {
  if (sigma <= 0) return src;
  const auto k = gaussian_kernel(sigma);
  const int r = static_cast<int>(k.size() / 2);
  const int h = static_cast<int>(src.rows()), w = static_cast<int>(src.cols());
  RowMatrix<double> tmp(h, w), out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int i = -r; i <= r; ++i) acc += k[i + r] * src(y, reflect(x + i, w));
      tmp(y, x) = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int i = -r; i <= r; ++i) acc += k[i + r] * tmp(reflect(y + i, h), x);
      out(y, x) = acc;
    }
  return out;
}

RowMatrix<double> filter2d(const RowMatrix<double>& src, const RowMatrix<double>& kernel) {
  const int h = static_cast<int>(src.rows()), w = static_cast<int>(src.cols());
  const int ry = static_cast<int>(kernel.rows() / 2), rx = static_cast<int>(kernel.cols() / 2);
  RowMatrix<double> out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int i = -ry; i <= ry; ++i)
        for (int j = -rx; j <= rx; ++j)
          acc += kernel(i + ry, j + rx) * src(reflect(y + i, h), reflect(x + j, w));
      out(y, x) = acc;
    }
  return out;
}

RowMatrix<double> disk_kernel(double radius, double alias_blur) {
  const int half = std::max(8, static_cast<int>(std::ceil(radius)));
  RowMatrix<double> k(2 * half + 1, 2 * half + 1);
  for (int y = -half; y <= half; ++y)
    for (int x = -half; x <= half; ++x)
      k(y + half, x + half) = (x * x + y * y <= radius * radius) ? 1.0 : 0.0;
  k /= k.sum();
  // Antialias the disk with a small Gaussian.
  RowMatrix<double> g(3, 3);
  for (int y = -1; y <= 1; ++y)
    for (int x = -1; x <= 1; ++x)
      g(y + 1, x + 1) = std::exp(-0.5 * (x * x + y * y) / (alias_blur * alias_blur));
  g /= g.sum();
  RowMatrix<double> out = filter2d(k, g);
  return out / out.sum();
}

RowMatrix<double> plane_of(const Image& img, int c) {
  return img.plane(0, c).cast<double>();
}

void set_plane(Image& img, int c, const RowMatrix<double>& p) {
  img.plane(0, c) = p.cast<float>();
}

void clip_inplace(Image& img) { img.flat() = img.flat().min(1.0f).max(0.0f); }

Image frost(const Image& x, const std::vector<double>& b, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0, 2);
  const Image& tmpl = frost_template(pick(rng));
  std::uniform_int_distribution<int> oy(0, tmpl.h() - 1), ox(0, tmpl.w() - 1);
  const int y0 = oy(rng), x0 = ox(rng);
  Image out = x;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < x.h(); ++y)
      for (int q = 0; q < x.w(); ++q) {
        const float f = tmpl(0, c, (y0 + y) % tmpl.h(), (x0 + q) % tmpl.w());
        out(0, c, y, q) = static_cast<float>(b[0] * x(0, c, y, q) + b[1] * f);
      }
  return out;
}

Image fog(const Image& x, const std::vector<double>& b, std::mt19937_64& rng) {
  int size = 3;
  while (size < std::max(x.h(), x.w())) size = 2 * (size - 1) + 1;
  const auto height = diamond_square(size, 1.0, rng(), b[1]);
  const double max_val = x.flat().maxCoeff();
  Image out = x;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < x.h(); ++y)
      for (int q = 0; q < x.w(); ++q) {
        const double v = x(0, c, y, q) + b[0] * height(y, q);
        out(0, c, y, q) = static_cast<float>(v * max_val / (max_val + b[0]));
      }
  return out;
}

Image spatter(const Image& x, const std::vector<double>& b, std::mt19937_64& rng) {
  const double loc = b[0], scale = b[1], sigma = b[2], thr = b[3], intensity = b[4];
  const bool mud = b[5] > 0.5;
  std::normal_distribution<double> noise(loc, scale);
  RowMatrix<double> liquid(x.h(), x.w());
  for (Eigen::Index i = 0; i < liquid.size(); ++i) liquid.data()[i] = noise(rng);
  liquid = blur_plane(liquid, sigma);
  RowMatrix<double> wet = (liquid.array() >= thr).cast<double>().matrix();
  Image out = x;
  if (mud) {
    RowMatrix<double> m = blur_plane(wet, intensity);
    m = (m.array() < 0.8).select(0.0, m.array()).matrix();
    const std::array<double, 3> color = {63 / 255.0, 42 / 255.0, 20 / 255.0};
    for (int c = 0; c < 3; ++c) {
      const RowMatrix<double> p = plane_of(x, c);
      set_plane(out, c, (p.array() * (1.0 - m.array()) + color[c] * m.array()).matrix());
    }
  } else {
    RowMatrix<double> m = blur_plane(wet, 1.0) * intensity;
    m = m.array().min(1.0).matrix();
    const std::array<double, 3> color = {175 / 255.0, 238 / 255.0, 238 / 255.0};
    for (int c = 0; c < 3; ++c) {
      const RowMatrix<double> p = plane_of(x, c);
      set_plane(out, c,
                (p.array() * (1.0 - 0.6 * m.array()) + 0.6 * color[c] * m.array()).matrix());
    }
  }
  return out;
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t string_hash(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

std::string to_string(CorruptionKind kind) {
  for (const auto& [k, name] : kind_names()) {
    if (k == kind) return name;
  }
  throw std::invalid_argument("unknown corruption kind");
}

CorruptionKind parse_kind(const std::string& name) {
  std::string norm = name;
  std::replace(norm.begin(), norm.end(), '_', '-');
  for (const auto& [k, n] : kind_names()) {
    if (n == norm) return k;
  }
  throw std::invalid_argument("unknown corruption kind: " + name);
}

const std::vector<CorruptionKind>& all_kinds() {
  static const std::vector<Kind> kinds = {
      Kind::kBrightness,   Kind::kContrast,     Kind::kFrost,
      Kind::kFog,          Kind::kGaussianNoise, Kind::kShotNoise,
      Kind::kSpatter,      Kind::kDefocusBlur,  Kind::kGaussianBlur,
      Kind::kJpeg,         Kind::kIdentity};
  return kinds;
}

const std::vector<CorruptionKind>& default_kinds() {
  static const std::vector<Kind> kinds = {
      Kind::kBrightness, Kind::kContrast,  Kind::kFrost,
      Kind::kFog,        Kind::kGaussianNoise, Kind::kShotNoise,
      Kind::kSpatter,    Kind::kDefocusBlur, Kind::kJpeg,
      Kind::kIdentity};
  return kinds;
}

const std::vector<int>& default_levels() {
  static const std::vector<int> levels = {1, 3, 5};
  return levels;
}

std::vector<double> severity(CorruptionKind kind, int level) {
  if (kind == Kind::kIdentity) return {};
  if (level < 1 || level > 5) {
    throw std::invalid_argument("severity level must be in 1..5, got " +
                                std::to_string(level));
  }
  return severity_table().at(kind)[level - 1];
}

Image gaussian_blur(const Image& image, double sigma) {
  Image out = image;
  for (int c = 0; c < image.c(); ++c) set_plane(out, c, blur_plane(plane_of(image, c), sigma));
  return out;
}

Image apply_corruption(const Image& image, const CorruptionSpec& spec) {
  if (image.n() != 1 || image.c() != 3) {
    throw std::invalid_argument("apply_corruption: expected a 1x3xHxW image");
  }
  if (!image.flat().isFinite().all()) {
    throw std::invalid_argument("apply_corruption: image has non-finite values");
  }
  if (spec.kind == Kind::kIdentity) return image;
  const auto b = severity(spec.kind, spec.level);
  std::mt19937_64 rng(spec.seed);
  Image out = image;
  switch (spec.kind) {
    case Kind::kBrightness:
      out.flat() += static_cast<float>(b[0]);
      break;
    case Kind::kContrast:
      for (int c = 0; c < 3; ++c) {
        const float mean = image.plane(0, c).mean();
        out.plane(0, c).array() =
            static_cast<float>(b[0]) * (image.plane(0, c).array() - mean) +
            image.plane(0, c).array();
      }
      break;
    case Kind::kFrost:
      out = frost(image, b, rng);
      break;
    case Kind::kFog:
      out = fog(image, b, rng);
      break;
    case Kind::kGaussianNoise: {
      std::normal_distribution<double> n(0.0, b[0]);
      for (std::size_t i = 0; i < out.size(); ++i) {
        out.data()[i] = static_cast<float>(image.data()[i] + n(rng));
      }
      break;
    }
    case Kind::kShotNoise:
      for (std::size_t i = 0; i < out.size(); ++i) {
        const double rate = std::max(0.0, static_cast<double>(image.data()[i])) * b[0];
        std::poisson_distribution<long> pois(rate);
        out.data()[i] = rate > 0 ? static_cast<float>(pois(rng) / b[0]) : 0.0f;
      }
      break;
    case Kind::kSpatter:
      out = spatter(image, b, rng);
      break;
    case Kind::kDefocusBlur: {
      const auto kernel = disk_kernel(b[0], b[1]);
      for (int c = 0; c < 3; ++c) set_plane(out, c, filter2d(plane_of(image, c), kernel));
      break;
    }
    case Kind::kGaussianBlur:
      out = gaussian_blur(image, b[0]);
      break;
    case Kind::kJpeg:
      out = io::from_raster(io::jpeg_roundtrip(io::to_raster(image), static_cast<int>(b[0])));
      break;
    case Kind::kIdentity:
      break;
  }
  clip_inplace(out);
  return out;
}

RowMatrix<double> diamond_square(int size, double wibble, std::uint64_t seed,
                                 double decay) {
  if (size < 3 || ((size - 1) & (size - 2)) != 0) {
    throw std::invalid_argument("diamond_square: size must be 2^k + 1 with k >= 1");
  }
  if (decay <= 0) throw std::invalid_argument("diamond_square: decay must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> disp(-1.0, 1.0);
  const int n = size - 1;
  RowMatrix<double> m = RowMatrix<double>::Zero(size, size);
  m(0, 0) = unit(rng);
  m(0, n) = unit(rng);
  m(n, 0) = unit(rng);
  m(n, n) = unit(rng);
  double amp = wibble;
  for (int step = n; step > 1; step /= 2) {
    const int half = step / 2;
    // square step: centers
    for (int y = half; y < size; y += step)
      for (int x = half; x < size; x += step) {
        const double avg = 0.25 * (m(y - half, x - half) + m(y - half, x + half) +
                                   m(y + half, x - half) + m(y + half, x + half));
        m(y, x) = avg + amp * disp(rng);
      }
    // diamond step: edge midpoints; boundary points use their two edge
    // neighbours only, which keeps the zero-displacement case bilinear.
    for (int y = 0; y < size; y += half)
      for (int x = (y / half) % 2 == 0 ? half : 0; x < size; x += step) {
        double avg;
        if (y == 0 || y == n) {
          avg = 0.5 * (m(y, x - half) + m(y, x + half));
        } else if (x == 0 || x == n) {
          avg = 0.5 * (m(y - half, x) + m(y + half, x));
        } else {
          avg = 0.25 * (m(y - half, x) + m(y + half, x) + m(y, x - half) + m(y, x + half));
        }
        m(y, x) = avg + amp * disp(rng);
      }
    amp /= decay;
  }
  const double lo = m.minCoeff(), hi = m.maxCoeff();
  if (hi - lo <= 0) return RowMatrix<double>::Zero(size, size);
  return ((m.array() - lo) / (hi - lo)).matrix();
}

const Image& frost_template(int which) {
  static const std::array<Image, 3> templates = [] {
    std::array<Image, 3> out;
    constexpr int kSize = 257;
    for (int t = 0; t < 3; ++t) {
      const auto base = diamond_square(kSize, 1.0, 0xF205ULL + 7919ULL * t, 1.35);
      RowMatrix<double> streak(kSize, kSize);
      for (int y = 0; y < kSize; ++y)
        for (int x = 0; x < kSize; ++x) {
          const double gx = base(y, std::min(x + 1, kSize - 1)) - base(y, std::max(x - 1, 0));
          const double gy = base(std::min(y + 1, kSize - 1), x) - base(std::max(y - 1, 0), x);
          streak(y, x) = std::sqrt(gx * gx + gy * gy);
        }
      const double thr = 0.6 * streak.maxCoeff() / 2.0;
      Image img(1, 3, kSize, kSize);
      const std::array<double, 3> tint = {0.82, 0.9, 1.0};
      for (int y = 0; y < kSize; ++y)
        for (int x = 0; x < kSize; ++x) {
          const double crystal = streak(y, x) > thr ? 1.0 : streak(y, x) / thr;
          const double v = std::clamp(0.35 * base(y, x) + 0.65 * crystal, 0.0, 1.0);
          for (int c = 0; c < 3; ++c) img(0, c, y, x) = static_cast<float>(v * tint[c]);
        }
      out[t] = std::move(img);
    }
    return out;
  }();
  if (which < 0 || which >= 3) throw std::invalid_argument("frost_template: index out of range");
  return templates[which];
}

void CorpusIndex::save_jsonl(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& e : entries) {
    nlohmann::json j = {{"id", e.id},       {"source_id", e.source_id},
                        {"kind", to_string(e.kind)}, {"level", e.level},
                        {"seed", e.seed},   {"path", e.path},
                        {"source_path", e.source_path}};
    out << j.dump() << '\n';
  }
}

CorpusIndex CorpusIndex::load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  CorpusIndex index;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      CorpusEntry e;
      e.id = j.at("id").get<std::string>();
      e.source_id = j.value("source_id", e.id);
      e.kind = parse_kind(j.value("kind", std::string("identity")));
      e.level = j.value("level", 0);
      e.seed = j.value("seed", std::uint64_t{0});
      e.path = j.at("path").get<std::string>();
      e.source_path = j.value("source_path", e.path);
      index.entries.push_back(std::move(e));
    } catch (const std::exception& ex) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return index;
}

CorpusIndex derive_corrupted_dataset(const std::vector<SourceImage>& images,
                                     const std::vector<CorruptionKind>& kinds,
                                     const std::vector<int>& levels,
                                     std::uint64_t seed) {
  if (images.empty()) throw std::invalid_argument("derive_corrupted_dataset: no images");
  if (kinds.empty()) throw std::invalid_argument("derive_corrupted_dataset: empty kinds");
  if (levels.empty()) throw std::invalid_argument("derive_corrupted_dataset: empty levels");
  for (int level : levels) {
    if (level != 1 && level != 3 && level != 5) {
      throw std::invalid_argument("derive_corrupted_dataset: levels must be in {1,3,5}");
    }
  }
  CorpusIndex index;
  std::set<std::tuple<std::string, Kind, int>> seen;
  for (const auto& img : images) {
    for (Kind kind : kinds) {
      for (int level : levels) {
        if (!seen.emplace(img.id, kind, level).second) {
          throw std::invalid_argument("derive_corrupted_dataset: duplicate entry for " + img.id);
        }
        CorpusEntry e;
        e.source_id = img.id;
        e.kind = kind;
        e.level = level;
        e.id = img.id + "__" + to_string(kind) + "__L" + std::to_string(level);
        e.seed = splitmix(seed ^ splitmix(string_hash(e.id)));
        e.path = "images/" + e.id + ".png";
        e.source_path = img.path;
        index.entries.push_back(std::move(e));
      }
    }
  }
  return index;
}

void materialize_corpus(const CorpusIndex& index, const std::string& root) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(root) / "images");
  std::map<std::string, Image> cache;
  for (const auto& e : index.entries) {
    auto it = cache.find(e.source_path);
    if (it == cache.end()) {
      it = cache.emplace(e.source_path, io::read_image_png(e.source_path)).first;
    }
    const Image out = apply_corruption(it->second, {e.kind, e.level, e.seed});
    io::write_image_png((fs::path(root) / e.path).string(), out);
  }
  index.save_jsonl((fs::path(root) / "index.jsonl").string());
}

}  // namespace sitta::corruptions
