#ifndef SITTA_CONFIG_HPP_
#define SITTA_CONFIG_HPP_

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sitta/auxnets.hpp"
#include "sitta/corruptions.hpp"
#include "sitta/harness.hpp"
#include "sitta/tta.hpp"

namespace sitta::config {

/// Environment variable that replaces `output_dir` when set.
inline constexpr const char* kOutputRootEnv = "SITTA_OUTPUT_ROOT";

/// Invalid configuration; what() is "<file>:<line>: <message>".
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& file, int line, const std::string& message);
  int line() const { return line_; }

 private:
  int line_;
};

struct TestbedSection {
  int images = 200;
  int size = 96;
  std::uint64_t seed = 1;
  int epochs = 12;
  double lr = 3e-3;
  int width = 8;
};

struct AuxTrainSection {
  auxnets::TargetKind target = auxnets::TargetKind::kPredictions;
  std::vector<int> harvest = {2, 4, 6, 8, 10};
  int attack_steps = 10;
  double attack_step = 1.0 / 255.0;
  int epochs = 20;
  double lr = 1e-3;
  int width = 8;
  int max_images = 0;  // 0 = all clean images
};

struct GridSection {
  std::vector<tta::Method> methods = {tta::Method::kPL};
  std::vector<tta::LossKind> losses = {tta::LossKind::kCE, tta::LossKind::kIoU};
  std::vector<core::ParamScope> scopes = {core::ParamScope::kFull, core::ParamScope::kNormAffine};
  std::vector<double> lrs = {1e-3, 1e-2};
  int iterations = tta::kMaxIterations;
  int workers = 1;
};

/// Every path is absolute after loading (relative ones resolve against the
/// directory of the config file).
struct ExperimentConfig {
  std::string source_path;
  std::uint64_t seed = 0;
  std::string output_dir = "out";

  std::string model_checkpoint;
  std::string architecture = "toy-segmenter";

  std::string dataset_root;  // clean images + masks
  std::string corpus_root;   // derived corpus; default <output_dir>/corpus

  std::vector<corruptions::CorruptionKind> kinds;
  std::vector<int> levels;
  std::uint64_t corruption_seed = 0;

  std::string refiner_path;    // default <output_dir>/aux/refiner.ckpt
  std::string estimator_path;  // default <output_dir>/aux/diou.ckpt
  AuxTrainSection aux_train;

  GridSection grid;
  tta::TTAConfig adapt;
  harness::Granularity granularity = harness::Granularity::kOverall;
  TestbedSection testbed;

  /// Cartesian product of the grid, keeping valid method/loss pairs only.
  std::vector<tta::TTAConfig> grid_configs() const;
  std::string results_dir() const;
  std::string report_dir() const;
};

/// Parses and validates; unknown keys and type errors raise ConfigError.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& text, const std::string& source_path);

}  // namespace sitta::config

#endif  // SITTA_CONFIG_HPP_
