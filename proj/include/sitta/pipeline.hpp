#ifndef SITTA_PIPELINE_HPP_
#define SITTA_PIPELINE_HPP_

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>

#include "sitta/config.hpp"

namespace sitta::pipeline {

/// Exit codes of the command-line tool.
enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kIncomplete = 3,  // grid stopped early by --max-jobs
};

struct RunOptions {
  std::optional<std::uint64_t> seed;  // overrides the config seed
  std::optional<int> workers;         // overrides grid.workers
  bool dry_run = false;
  std::optional<std::size_t> max_jobs;
  std::string image;                  // `adapt`: restrict to one image id
};

int make_shapes(const config::ExperimentConfig& cfg, std::ostream& log);
int train_segmenter(const config::ExperimentConfig& cfg, std::ostream& log);
int corrupt(const config::ExperimentConfig& cfg, const RunOptions& opt, std::ostream& log);
int train_aux(const config::ExperimentConfig& cfg, const RunOptions& opt, std::ostream& log);
int adapt(const config::ExperimentConfig& cfg, const RunOptions& opt, std::ostream& log);
int grid(const config::ExperimentConfig& cfg, const RunOptions& opt, std::ostream& log);
int report(const config::ExperimentConfig& cfg, std::ostream& log);

/// Full command-line entry point (subcommand parsing included).
int run_cli(int argc, const char* const* argv);

}  // namespace sitta::pipeline

#endif  // SITTA_PIPELINE_HPP_
