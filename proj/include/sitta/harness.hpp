#ifndef SITTA_HARNESS_HPP_
#define SITTA_HARNESS_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sitta/core.hpp"
#include "sitta/corruptions.hpp"
#include "sitta/dataset.hpp"
#include "sitta/tta.hpp"

namespace sitta::harness {

/// One adapted (image, config) pair. miou_i[k] is the score after k
/// iterations (k = 0 is the non-adapted score); NaN when undefined.
struct ResultRow {
  std::string image_id;
  std::string source_id;
  corruptions::CorruptionKind kind = corruptions::CorruptionKind::kIdentity;
  int level = 0;
  tta::TTAConfig config;
  std::vector<double> miou_i;
  std::vector<double> entropy;
  bool diverged = false;

  std::string key() const { return config.key(); }
  /// "method/loss/scope": one column of the report tables.
  std::string column() const;
  double na_miou_i() const { return miou_i.front(); }
  double na_entropy() const { return entropy.front(); }
  int budget() const { return static_cast<int>(miou_i.size()) - 1; }

  nlohmann::json to_json() const;
  static ResultRow from_json(const nlohmann::json& j);
  static ResultRow from_record(const tta::AdaptationRecord& rec, const data::Sample& sample);
};

/// At most one row per (image, config key).
class ResultTable {
 public:
  /// Throws std::invalid_argument on a duplicate (image, key).
  void add(ResultRow row);
  bool contains(const std::string& image_id, const std::string& key) const;
  const std::vector<ResultRow>& rows() const { return rows_; }
  std::size_t size() const { return rows_.size(); }
  bool empty() const { return rows_.empty(); }

  /// Rows sorted by (config key, image id).
  std::vector<ResultRow> sorted() const;
  std::vector<std::string> keys() const;
  std::vector<std::string> image_ids() const;

  void save_csv(const std::string& path) const;
  void save_jsonl(const std::string& path) const;
  /// Skips a truncated trailing line (interrupted append).
  static ResultTable load_jsonl(const std::string& path);

 private:
  std::vector<ResultRow> rows_;
  std::map<std::pair<std::string, std::string>, std::size_t> index_;
};

struct AuxPaths {
  std::string refiner;    // empty when unavailable
  std::string estimator;
};

struct GridOptions {
  int budget = tta::kMaxIterations;
  int workers = 1;
  std::uint64_t seed = 0;
  /// When set, results.jsonl there is appended per job and reused on rerun.
  std::optional<std::string> results_dir;
  /// Stop after this many new jobs (simulates an interruption).
  std::optional<std::size_t> max_jobs;
  AuxPaths aux;
};

struct GridOutcome {
  ResultTable table;
  std::size_t planned = 0;   // |images| x |runnable configs|
  std::size_t skipped = 0;   // already present in the store
  std::size_t executed = 0;
  bool complete = false;
  std::vector<std::string> warnings;
};

/// Per-job seed derived from the global seed and the image id.
std::uint64_t job_seed(std::uint64_t seed, const std::string& image_id);

/**
 * Adapts every (image, config) once with the full iteration budget. Configs
 * whose auxiliary network is missing are skipped with a warning. Worker
 * threads each own a model replica; rows are written by a single writer.
 * results.csv is rewritten in sorted order at the end of every call, so an
 * interrupted run leaves the sorted rows completed so far.
 */
GridOutcome grid_search(const std::vector<data::Sample>& images, const core::ModelAdapter& model,
                        const std::vector<tta::TTAConfig>& configs, const GridOptions& options);

// ---------------------------------------------------------------------------
// Selection

enum class Granularity { kOverall, kPerCorruption, kPerLevel };
std::string to_string(Granularity g);
Granularity parse_granularity(const std::string& text);

/// Cell label of a row: "all", "<kind>" or "<kind>@L<level>".
std::string cell_of(const ResultRow& row, Granularity g);

struct Choice {
  std::string key;
  std::string column;
  double lr = 0;
  int iterations = 0;
  double score = 0;  // mean m̄IoU_i in the cell at (key, iterations)
};

/// Cell label -> chosen (config, iteration count).
using Selection = std::map<std::string, Choice>;

/**
 * Within each cell, maximizes the mean m̄IoU_i over candidates (config key,
 * k) with k in 1..budget. Ties go to fewer iterations, then lower lr. When
 * `column` is non-empty only that method/loss/scope column competes.
 */
Selection select_hparams(const ResultTable& table, Granularity g, const std::string& column = {});

/// Per-image m̄IoU_i under a selection (rows of the chosen key only).
std::map<std::string, double> selected_scores(const ResultTable& table, const Selection& sel,
                                              Granularity g);
/// Per-image non-adapted m̄IoU_i.
std::map<std::string, double> na_scores(const ResultTable& table);

double mean_score(const std::map<std::string, double>& per_image);

struct OracleResult {
  std::map<std::string, std::string> best_method;  // per image
  std::map<std::string, double> best_score;
  double aggregate = 0;
};

/// Per image, the method with maximal score (first in map order on ties).
/// Throws when the methods cover different image sets.
OracleResult oracle_select(const std::map<std::string, std::map<std::string, double>>& per_method);

struct LinearFit {
  double slope = 0;
  double intercept = 0;
};

/// Ordinary least squares of y on x; throws when x is constant.
LinearFit least_squares(const std::vector<double>& x, const std::vector<double>& y);

/// Fit of (selected m̄IoU_i - NA m̄IoU_i) against NA entropy for one column.
LinearFit entropy_improvement_fit(const ResultTable& table, const std::string& column,
                                  std::vector<double>* x_out = nullptr,
                                  std::vector<double>* y_out = nullptr);

// ---------------------------------------------------------------------------
// Reporting

struct ReportColumn {
  std::string column;  // method/loss/scope
  double na = 0;
  double tta = 0;
  double delta = 0;
  Selection selection;
  std::map<std::string, double> error_reduction;  // "<kind>@L<level>" -> %
};

struct Report {
  Granularity granularity = Granularity::kOverall;
  std::vector<ReportColumn> columns;
  OracleResult oracle;
  std::vector<std::string> cells;  // "<kind>@L<level>" in table order
};

/// Δ formatted for the tables: "-ε" when negative, else two decimals.
std::string format_delta(double delta);

Report aggregate_report(const ResultTable& table, Granularity g = Granularity::kOverall);

/// Writes tables/*.csv and figures/*.png under `dir`.
void write_report(const Report& report, const ResultTable& table, const std::string& dir);

}  // namespace sitta::harness

#endif  // SITTA_HARNESS_HPP_
