#ifndef SITTA_CORE_HPP_
#define SITTA_CORE_HPP_

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "sitta/nn/layers.hpp"
#include "sitta/tensor.hpp"

namespace sitta::core {

using Param = nn::Parameter<float>;
using ParamBuffer = nn::Buffer<float>;

/**
 * Segmentation network contract used by every adaptation method.
 *
 * forward() maps an Nx3xHxW image batch to NxCxHxW logits and caches what
 * backward() needs; backward() always refers to the most recent forward.
 * Outside of source pretraining the adapter stays in evaluation mode, so
 * normalization running statistics are never mutated.
 */
class ModelAdapter {
 public:
  virtual ~ModelAdapter() = default;

  virtual std::string architecture() const = 0;
  virtual int num_classes() const = 0;

  virtual LogitMask forward(const TensorF& images) = 0;
  virtual TensorF backward(const TensorF& grad_logits, nn::GradRequest req = {}) = 0;

  virtual std::vector<Param*> parameters() = 0;
  virtual std::vector<ParamBuffer*> buffers() = 0;

  virtual void set_training(bool training) = 0;
  virtual bool training() const = 0;

  virtual void init(std::uint64_t seed) = 0;
  virtual std::unique_ptr<ModelAdapter> clone() const = 0;
  /// Architecture hyper-parameters persisted with checkpoints.
  virtual std::map<std::string, std::string> config() const = 0;

  void zero_grad();
  void save(const std::string& path);
};

enum class ParamScope { kFull, kNormAffine };

std::string to_string(ParamScope scope);
ParamScope parse_scope(const std::string& text);

/// By-value copy of every trainable parameter.
class WeightSnapshot {
 public:
  WeightSnapshot() = default;

  std::size_t size() const { return values_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<ArrayX<float>>& values() const { return values_; }

 private:
  friend WeightSnapshot snapshot_weights(ModelAdapter& model);
  friend void restore_weights(ModelAdapter& model, const WeightSnapshot& snap);

  std::vector<std::string> names_;
  std::vector<ArrayX<float>> values_;
};

WeightSnapshot snapshot_weights(ModelAdapter& model);

/// Throws std::invalid_argument when the parameter structure differs.
void restore_weights(ModelAdapter& model, const WeightSnapshot& snap);

/// Throws std::invalid_argument for kNormAffine on a model without
/// normalization layers.
std::vector<Param*> select_params(ModelAdapter& model, ParamScope scope);

/// FNV-1a over all parameter and buffer bytes.
std::uint64_t parameter_hash(ModelAdapter& model);

using ModelFactory = std::function<std::unique_ptr<ModelAdapter>(
    const std::map<std::string, std::string>& config)>;

/// Architecture id -> factory. "toy-segmenter" and "toy-segmenter-nonorm" are
/// always present.
class ModelRegistry {
 public:
  static ModelRegistry& instance();

  void add(const std::string& architecture, ModelFactory factory);
  bool contains(const std::string& architecture) const;
  std::vector<std::string> architectures() const;
  std::unique_ptr<ModelAdapter> create(
      const std::string& architecture,
      const std::map<std::string, std::string>& config = {}) const;

 private:
  ModelRegistry();
  std::map<std::string, ModelFactory> factories_;
};

/// Builds the adapter registered under `architecture` and loads weights from
/// `checkpoint_path`. The checkpoint must have been written for the same
/// architecture.
std::unique_ptr<ModelAdapter> load_model(const std::string& checkpoint_path,
                                         const std::string& architecture);

/// Toy segmenter adapter with the given class count and width.
std::unique_ptr<ModelAdapter> make_toy_segmenter(int num_classes = 4, int width = 8,
                                                 bool norm = true,
                                                 std::uint64_t seed = 0);

}  // namespace sitta::core

#endif  // SITTA_CORE_HPP_
