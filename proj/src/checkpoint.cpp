#include "sitta/nn/checkpoint.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace sitta::nn {
namespace {

constexpr char kMagic[8] = {'S', 'I', 'T', 'T', 'A', 'C', 'K', '1'};

void write_u64(std::ofstream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_string(std::ofstream& out, const std::string& s) {
  write_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
std::uint64_t read_u64(std::ifstream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return v;
}
std::string read_string(std::ifstream& in) {
  const auto len = read_u64(in);
  if (len > (1u << 20)) throw std::runtime_error("checkpoint: corrupt string");
  std::string s(len, '\0');
  in.read(s.data(), static_cast<std::streamsize>(len));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return s;
}

}  // namespace

void Checkpoint::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  out.write(kMagic, sizeof(kMagic));
  write_u64(out, meta.size());
  for (const auto& [k, v] : meta) {
    write_string(out, k);
    write_string(out, v);
  }
  write_u64(out, tensors.size());
  for (const auto& [name, values] : tensors) {
    write_string(out, name);
    write_u64(out, static_cast<std::uint64_t>(values.size()));
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + 8, kMagic)) {
    throw std::runtime_error("checkpoint: bad magic in " + path);
  }
  Checkpoint ckpt;
  const auto n_meta = read_u64(in);
  for (std::uint64_t i = 0; i < n_meta; ++i) {
    auto k = read_string(in);
    ckpt.meta[k] = read_string(in);
  }
  const auto n_tensors = read_u64(in);
  for (std::uint64_t i = 0; i < n_tensors; ++i) {
    auto name = read_string(in);
    const auto count = read_u64(in);
    ArrayX<float> values(static_cast<Eigen::Index>(count));
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(count * sizeof(float)));
    if (!in) throw std::runtime_error("checkpoint: truncated tensor " + name);
    ckpt.tensors.emplace(std::move(name), std::move(values));
  }
  return ckpt;
}

void store(Checkpoint& ckpt, const std::vector<Parameter<float>*>& params,
           const std::vector<Buffer<float>*>& buffers) {
  for (const auto* p : params) ckpt.tensors[p->name] = p->value;
  for (const auto* b : buffers) ckpt.tensors[b->name] = b->value;
}

namespace {
void assign(const Checkpoint& ckpt, const std::string& name, ArrayX<float>& dst) {
  auto it = ckpt.tensors.find(name);
  if (it == ckpt.tensors.end()) {
    throw std::runtime_error("checkpoint: missing tensor " + name);
  }
  if (it->second.size() != dst.size()) {
    throw std::runtime_error("checkpoint: size mismatch for " + name);
  }
  dst = it->second;
}
}  // namespace

void restore(const Checkpoint& ckpt, const std::vector<Parameter<float>*>& params,
             const std::vector<Buffer<float>*>& buffers) {
  for (auto* p : params) assign(ckpt, p->name, p->value);
  for (auto* b : buffers) assign(ckpt, b->name, b->value);
}

}  // namespace sitta::nn
