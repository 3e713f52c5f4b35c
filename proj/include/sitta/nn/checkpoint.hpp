#ifndef SITTA_NN_CHECKPOINT_HPP_
#define SITTA_NN_CHECKPOINT_HPP_

#include <map>
#include <string>
#include <vector>

#include "sitta/nn/layers.hpp"

namespace sitta::nn {

/// Named float arrays plus string metadata, stored in a small binary file.
struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::map<std::string, ArrayX<float>> tensors;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

/// Copies parameters and buffers into a checkpoint under their names.
void store(Checkpoint& ckpt, const std::vector<Parameter<float>*>& params,
           const std::vector<Buffer<float>*>& buffers);

/// Loads every parameter and buffer by name; throws on missing names or size
/// mismatch.
void restore(const Checkpoint& ckpt, const std::vector<Parameter<float>*>& params,
             const std::vector<Buffer<float>*>& buffers);

}  // namespace sitta::nn

#endif  // SITTA_NN_CHECKPOINT_HPP_
