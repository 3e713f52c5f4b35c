#include "sitta/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <tuple>

#include "sitta/metrics.hpp"
#include "sitta/plot.hpp"

namespace sitta::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt(double v) {
  if (!std::isfinite(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string fmt2(double v) {
  if (!std::isfinite(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

json nan_to_null(const std::vector<double>& v) {
  json out = json::array();
  for (double x : v) out.push_back(std::isfinite(x) ? json(x) : json(nullptr));
  return out;
}

std::vector<double> null_to_nan(const json& j) {
  std::vector<double> out;
  for (const auto& x : j) out.push_back(x.is_null() ? kNaN : x.get<double>());
  return out;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// Canonical column order of the report tables.
std::tuple<int, int, int> column_rank(const std::string& column) {
  static const std::vector<std::string> methods = {"Ent", "PL", "Ref", "AugCo", "Adv", "dIoU"};
  static const std::vector<std::string> losses = {"ent", "ce", "iou", "kl", "-"};
  const auto a = column.find('/'), b = column.rfind('/');
  const std::string m = column.substr(0, a), l = column.substr(a + 1, b - a - 1),
                    s = column.substr(b + 1);
  const auto mi = std::find(methods.begin(), methods.end(), m) - methods.begin();
  const auto li = std::find(losses.begin(), losses.end(), l) - losses.begin();
  return {static_cast<int>(mi), s == "full" ? 0 : 1, static_cast<int>(li)};
}

std::string level_cell(const ResultRow& row) {
  return corruptions::to_string(row.kind) + "@L" + std::to_string(row.level);
}

}  // namespace

// ---------------------------------------------------------------------------

std::string ResultRow::column() const {
  return tta::to_string(config.method) + "/" + tta::to_string(config.loss) + "/" +
         (config.scope == core::ParamScope::kFull ? "full" : "norm");
}

json ResultRow::to_json() const {
  return {{"image", image_id},        {"source", source_id},
          {"kind", corruptions::to_string(kind)},
          {"level", level},           {"key", key()},
          {"config", config.to_json()}, {"miou_i", nan_to_null(miou_i)},
          {"entropy", nan_to_null(entropy)}, {"diverged", diverged}};
}

ResultRow ResultRow::from_json(const json& j) {
  ResultRow r;
  r.image_id = j.at("image").get<std::string>();
  r.source_id = j.at("source").get<std::string>();
  r.kind = corruptions::parse_kind(j.at("kind").get<std::string>());
  r.level = j.at("level").get<int>();
  r.config = tta::TTAConfig::from_json(j.at("config"));
  r.miou_i = null_to_nan(j.at("miou_i"));
  r.entropy = null_to_nan(j.at("entropy"));
  r.diverged = j.at("diverged").get<bool>();
  if (r.miou_i.empty() || r.miou_i.size() != r.entropy.size()) {
    throw std::runtime_error("result row for " + r.image_id + " has inconsistent curves");
  }
  return r;
}

ResultRow ResultRow::from_record(const tta::AdaptationRecord& rec, const data::Sample& sample) {
  ResultRow r;
  r.image_id = sample.id;
  r.source_id = sample.source_id.empty() ? sample.id : sample.source_id;
  r.kind = sample.kind;
  r.level = sample.level;
  r.config = rec.config;
  for (const auto& it : rec.iterations) {
    r.miou_i.push_back(it.miou_i ? *it.miou_i : kNaN);
    r.entropy.push_back(it.entropy);
  }
  r.diverged = rec.diverged;
  return r;
}

void ResultTable::add(ResultRow row) {
  auto id = std::make_pair(row.image_id, row.key());
  if (index_.count(id)) {
    throw std::invalid_argument("duplicate result row for (" + id.first + ", " + id.second + ")");
  }
  index_.emplace(std::move(id), rows_.size());
  rows_.push_back(std::move(row));
}

bool ResultTable::contains(const std::string& image_id, const std::string& key) const {
  return index_.count({image_id, key}) > 0;
}

std::vector<ResultRow> ResultTable::sorted() const {
  std::vector<ResultRow> out = rows_;
  std::sort(out.begin(), out.end(), [](const ResultRow& a, const ResultRow& b) {
    const auto ka = a.key(), kb = b.key();
    return ka != kb ? ka < kb : a.image_id < b.image_id;
  });
  return out;
}

std::vector<std::string> ResultTable::keys() const {
  std::set<std::string> s;
  for (const auto& r : rows_) s.insert(r.key());
  return {s.begin(), s.end()};
}

std::vector<std::string> ResultTable::image_ids() const {
  std::set<std::string> s;
  for (const auto& r : rows_) s.insert(r.image_id);
  return {s.begin(), s.end()};
}

void ResultTable::save_csv(const std::string& path) const {
  int budget = 0;
  for (const auto& r : rows_) budget = std::max(budget, r.budget());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "image,source,kind,level,method,loss,scope,lr,diverged,na_entropy";
  for (int k = 0; k <= budget; ++k) out << ",miou_i_" << k;
  out << "\n";
  for (const auto& r : sorted()) {
    out << r.image_id << "," << r.source_id << "," << corruptions::to_string(r.kind) << ","
        << r.level << "," << tta::to_string(r.config.method) << ","
        << tta::to_string(r.config.loss) << "," << core::to_string(r.config.scope) << ","
        << fmt(r.config.lr) << "," << (r.diverged ? 1 : 0) << "," << fmt(r.na_entropy());
    for (int k = 0; k <= budget; ++k) {
      out << "," << (k < static_cast<int>(r.miou_i.size()) ? fmt(r.miou_i[k]) : "");
    }
    out << "\n";
  }
}

void ResultTable::save_jsonl(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& r : sorted()) out << r.to_json().dump() << "\n";
}

ResultTable ResultTable::load_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) lines.push_back(line);
  }
  ResultTable table;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    try {
      table.add(ResultRow::from_json(json::parse(lines[i])));
    } catch (const json::exception& e) {
      if (i + 1 == lines.size()) {
        std::cerr << "warning: " << path << ": ignoring truncated last line\n";
        break;
      }
      throw std::runtime_error(path + ":" + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return table;
}

// ---------------------------------------------------------------------------

std::uint64_t job_seed(std::uint64_t seed, const std::string& image_id) {
  std::uint64_t x = seed ^ fnv1a(image_id);
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

GridOutcome grid_search(const std::vector<data::Sample>& images, const core::ModelAdapter& model,
                        const std::vector<tta::TTAConfig>& configs, const GridOptions& options) {
  if (options.budget < 0 || options.budget > tta::kMaxIterations) {
    throw std::invalid_argument("grid_search: budget must be in [0, 10]");
  }
  GridOutcome outcome;
  std::vector<tta::TTAConfig> runnable;
  std::set<std::string> seen;
  for (tta::TTAConfig cfg : configs) {
    cfg.iterations = options.budget;
    cfg.validate();
    if (!seen.insert(cfg.key()).second) {
      throw std::invalid_argument("grid_search: duplicate config " + cfg.key());
    }
    if (tta::needs_refiner(cfg.method) && options.aux.refiner.empty()) {
      outcome.warnings.push_back("skipping " + cfg.key() + ": no mask refiner checkpoint");
      continue;
    }
    if (tta::needs_estimator(cfg.method) && options.aux.estimator.empty()) {
      outcome.warnings.push_back("skipping " + cfg.key() + ": no IoU estimator checkpoint");
      continue;
    }
    runnable.push_back(cfg);
  }
  for (const auto& w : outcome.warnings) std::cerr << "warning: " << w << "\n";

  fs::path jsonl, csv;
  if (options.results_dir) {
    fs::create_directories(*options.results_dir);
    jsonl = fs::path(*options.results_dir) / "results.jsonl";
    csv = fs::path(*options.results_dir) / "results.csv";
    if (fs::exists(jsonl)) outcome.table = ResultTable::load_jsonl(jsonl.string());
  }

  struct Job {
    const tta::TTAConfig* cfg;
    const data::Sample* sample;
  };
  std::vector<Job> jobs;
  for (const auto& cfg : runnable) {
    for (const auto& s : images) {
      ++outcome.planned;
      if (outcome.table.contains(s.id, cfg.key())) {
        ++outcome.skipped;
        continue;
      }
      jobs.push_back({&cfg, &s});
    }
  }
  if (options.max_jobs && jobs.size() > *options.max_jobs) jobs.resize(*options.max_jobs);

  std::ofstream store;
  if (!jsonl.empty()) {
    // Drop a torn trailing line left by an interrupted writer.
    if (fs::exists(jsonl)) outcome.table.save_jsonl(jsonl.string());
    store.open(jsonl, std::ios::binary | std::ios::app);
    if (!store) throw std::runtime_error("cannot append to " + jsonl.string());
  }

  std::mutex writer;
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  const int workers = std::max(1, std::min<int>(options.workers, static_cast<int>(jobs.size())));
  auto work = [&]() {
    try {
      auto replica = model.clone();
      replica->set_training(false);
      std::unique_ptr<auxnets::UNetRefiner> refiner;
      std::unique_ptr<auxnets::DeepIoUEstimator> estimator;
      if (!options.aux.refiner.empty()) refiner = auxnets::UNetRefiner::load(options.aux.refiner);
      if (!options.aux.estimator.empty()) {
        estimator = auxnets::DeepIoUEstimator::load(options.aux.estimator);
      }
      const tta::AuxModels aux{refiner.get(), estimator.get()};
      for (std::size_t j = next++; j < jobs.size(); j = next++) {
        {
          std::lock_guard<std::mutex> lock(writer);
          if (failure) return;
        }
        tta::TTAConfig cfg = *jobs[j].cfg;
        cfg.seed = job_seed(options.seed, jobs[j].sample->id);
        const auto rec = tta::adapt_single_image(*replica, jobs[j].sample->image, cfg, aux,
                                                 jobs[j].sample->mask, jobs[j].sample->id);
        ResultRow row = ResultRow::from_record(rec, *jobs[j].sample);
        std::lock_guard<std::mutex> lock(writer);
        if (store.is_open()) {
          store << row.to_json().dump() << "\n";
          store.flush();
        }
        outcome.table.add(std::move(row));
        ++outcome.executed;
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(writer);
      if (!failure) failure = std::current_exception();
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  outcome.complete = outcome.skipped + outcome.executed == outcome.planned;
  if (!csv.empty()) outcome.table.save_csv(csv.string());
  return outcome;
}

// ---------------------------------------------------------------------------

std::string to_string(Granularity g) {
  switch (g) {
    case Granularity::kOverall: return "overall";
    case Granularity::kPerCorruption: return "per-corruption";
    case Granularity::kPerLevel: return "per-level";
  }
  return "?";
}

Granularity parse_granularity(const std::string& text) {
  if (text == "overall") return Granularity::kOverall;
  if (text == "per-corruption") return Granularity::kPerCorruption;
  if (text == "per-level") return Granularity::kPerLevel;
  throw std::invalid_argument("unknown granularity '" + text + "'");
}

std::string cell_of(const ResultRow& row, Granularity g) {
  switch (g) {
    case Granularity::kOverall: return "all";
    case Granularity::kPerCorruption: return corruptions::to_string(row.kind);
    case Granularity::kPerLevel: return level_cell(row);
  }
  return "all";
}

Selection select_hparams(const ResultTable& table, Granularity g, const std::string& column) {
  // cell -> key -> rows (in image order)
  std::map<std::string, std::map<std::string, std::vector<const ResultRow*>>> cells;
  for (const auto& r : table.rows()) {
    if (!column.empty() && r.column() != column) continue;
    if (!std::isfinite(r.na_miou_i())) continue;
    cells[cell_of(r, g)][r.key()].push_back(&r);
  }
  if (cells.empty()) {
    throw std::invalid_argument("select_hparams: no rows" +
                                (column.empty() ? std::string() : " for column " + column));
  }
  Selection out;
  for (auto& [cell, by_key] : cells) {
    std::optional<Choice> best;
    for (auto& [key, rows] : by_key) {
      std::sort(rows.begin(), rows.end(),
                [](const ResultRow* a, const ResultRow* b) { return a->image_id < b->image_id; });
      int budget = tta::kMaxIterations;
      for (const auto* r : rows) budget = std::min(budget, r->budget());
      for (int k = 1; k <= budget; ++k) {
        double sum = 0;
        for (const auto* r : rows) sum += std::isfinite(r->miou_i[k]) ? r->miou_i[k] : r->na_miou_i();
        const double score = sum / rows.size();
        const double lr = rows.front()->config.lr;
        const bool better =
            !best || score > best->score ||
            (score == best->score &&
             std::tie(k, lr, key) < std::tie(best->iterations, best->lr, best->key));
        if (better) best = Choice{key, rows.front()->column(), lr, k, score};
      }
    }
    if (!best) throw std::invalid_argument("select_hparams: cell '" + cell + "' has no candidates");
    out.emplace(cell, *best);
  }
  return out;
}

std::map<std::string, double> selected_scores(const ResultTable& table, const Selection& sel,
                                              Granularity g) {
  std::map<std::string, double> out;
  for (const auto& r : table.rows()) {
    const auto it = sel.find(cell_of(r, g));
    if (it == sel.end() || it->second.key != r.key() || !std::isfinite(r.na_miou_i())) continue;
    const double v = r.miou_i.at(it->second.iterations);
    out[r.image_id] = std::isfinite(v) ? v : r.na_miou_i();
  }
  return out;
}

std::map<std::string, double> na_scores(const ResultTable& table) {
  std::map<std::string, double> out;
  for (const auto& r : table.rows()) {
    if (std::isfinite(r.na_miou_i())) out.emplace(r.image_id, r.na_miou_i());
  }
  return out;
}

double mean_score(const std::map<std::string, double>& per_image) {
  if (per_image.empty()) throw std::invalid_argument("mean_score: no images");
  double sum = 0;
  for (const auto& [id, v] : per_image) sum += v;
  return sum / per_image.size();
}

OracleResult oracle_select(const std::map<std::string, std::map<std::string, double>>& per_method) {
  if (per_method.empty()) throw std::invalid_argument("oracle_select: no methods");
  const auto& reference = per_method.begin()->second;
  for (const auto& [name, scores] : per_method) {
    bool same = scores.size() == reference.size();
    for (auto a = scores.begin(), b = reference.begin(); same && a != scores.end(); ++a, ++b) {
      same = a->first == b->first;
    }
    if (!same) {
      throw std::invalid_argument("oracle_select: method '" + name +
                                  "' covers a different image set");
    }
  }
  OracleResult out;
  for (const auto& [image, unused] : reference) {
    std::string best;
    double score = -std::numeric_limits<double>::infinity();
    for (const auto& [name, scores] : per_method) {
      const double v = scores.at(image);
      if (v > score) {
        score = v;
        best = name;
      }
    }
    out.best_method[image] = best;
    out.best_score[image] = score;
  }
  out.aggregate = reference.empty() ? 0.0 : mean_score(out.best_score);
  return out;
}

LinearFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("least_squares: size mismatch");
  if (x.size() < 2) throw std::invalid_argument("least_squares: need at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0) throw std::invalid_argument("least_squares: x is constant");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  return fit;
}

LinearFit entropy_improvement_fit(const ResultTable& table, const std::string& column,
                                  std::vector<double>* x_out, std::vector<double>* y_out) {
  const Selection sel = select_hparams(table, Granularity::kOverall, column);
  const Choice& c = sel.at("all");
  std::vector<const ResultRow*> rows;
  for (const auto& r : table.rows()) {
    if (r.key() == c.key && std::isfinite(r.na_miou_i())) rows.push_back(&r);
  }
  std::sort(rows.begin(), rows.end(),
            [](const ResultRow* a, const ResultRow* b) { return a->image_id < b->image_id; });
  std::vector<double> x, y;
  for (const auto* r : rows) {
    const double v = std::isfinite(r->miou_i[c.iterations]) ? r->miou_i[c.iterations] : r->na_miou_i();
    x.push_back(r->na_entropy());
    y.push_back(v - r->na_miou_i());
  }
  if (x_out) *x_out = x;
  if (y_out) *y_out = y;
  return least_squares(x, y);
}

// ---------------------------------------------------------------------------

std::string format_delta(double delta) {
  if (delta < 0) return "-ε";
  return fmt2(delta);
}

Report aggregate_report(const ResultTable& table, Granularity g) {
  if (table.empty()) throw std::invalid_argument("aggregate_report: empty result table");
  Report report;
  report.granularity = g;
  std::vector<std::string> columns;
  {
    std::set<std::string> s;
    for (const auto& r : table.rows()) {
      if (s.insert(r.column()).second) columns.push_back(r.column());
      const std::string cell = level_cell(r);
      if (std::find(report.cells.begin(), report.cells.end(), cell) == report.cells.end()) {
        report.cells.push_back(cell);
      }
    }
  }
  std::sort(columns.begin(), columns.end(), [](const std::string& a, const std::string& b) {
    return column_rank(a) < column_rank(b);
  });

  std::map<std::string, std::map<std::string, double>> per_method;
  std::map<std::string, std::string> cell_of_image;
  for (const auto& r : table.rows()) cell_of_image[r.image_id] = level_cell(r);

  for (const auto& column : columns) {
    ReportColumn rc;
    rc.column = column;
    rc.selection = select_hparams(table, g, column);
    const auto scores = selected_scores(table, rc.selection, g);
    std::map<std::string, double> na;
    const auto all_na = na_scores(table);
    for (const auto& [id, v] : scores) na[id] = all_na.at(id);
    rc.na = mean_score(na);
    rc.tta = mean_score(scores);
    rc.delta = rc.tta - rc.na;

    std::map<std::string, std::pair<double, double>> sums;
    std::map<std::string, int> counts;
    for (const auto& [id, v] : scores) {
      auto& s = sums[cell_of_image.at(id)];
      s.first += na.at(id);
      s.second += v;
      ++counts[cell_of_image.at(id)];
    }
    for (const auto& [cell, s] : sums) {
      const double n = counts[cell];
      const double cell_na = s.first / n, cell_tta = s.second / n;
      rc.error_reduction[cell] =
          cell_na < 100.0 ? metrics::error_reduction(cell_na, cell_tta) : kNaN;
    }
    per_method[column] = scores;
    report.columns.push_back(std::move(rc));
  }

  // Oracle over columns that cover every image, plus no adaptation.
  const auto all_na = na_scores(table);
  std::map<std::string, std::map<std::string, double>> complete;
  complete["NA"] = all_na;
  for (const auto& [name, scores] : per_method) {
    if (scores.size() == all_na.size()) complete[name] = scores;
  }
  report.oracle = oracle_select(complete);
  return report;
}

void write_report(const Report& report, const ResultTable& table, const std::string& dir) {
  const fs::path tables = fs::path(dir) / "tables";
  const fs::path figures = fs::path(dir) / "figures";
  fs::create_directories(tables);
  fs::create_directories(figures);
  auto open = [](const fs::path& p) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    return out;
  };

  {
    auto out = open(tables / "summary.csv");
    std::vector<std::array<std::string, 3>> parts;
    for (const auto& c : report.columns) {
      const auto a = c.column.find('/'), b = c.column.rfind('/');
      parts.push_back({c.column.substr(0, a), c.column.substr(b + 1),
                       c.column.substr(a + 1, b - a - 1)});
    }
    const char* labels[3] = {"method", "params", "loss"};
    for (int i = 0; i < 3; ++i) {
      out << labels[i];
      for (const auto& p : parts) out << "," << p[i];
      out << "\n";
    }
    out << "NA";
    for (const auto& c : report.columns) out << "," << fmt2(c.na);
    out << "\nTTA";
    for (const auto& c : report.columns) out << "," << fmt2(c.tta);
    out << "\nDelta_ABS";
    for (const auto& c : report.columns) out << "," << format_delta(c.delta);
    out << "\n";
  }
  {
    auto out = open(tables / "selection.csv");
    out << "column,granularity,cell,config,lr,iterations,mean_miou_i\n";
    for (const auto& c : report.columns)
      for (const auto& [cell, ch] : c.selection) {
        out << c.column << "," << to_string(report.granularity) << "," << cell << "," << ch.key
            << "," << fmt(ch.lr) << "," << ch.iterations << "," << fmt(ch.score) << "\n";
      }
  }
  {
    auto out = open(tables / "error_reduction.csv");
    out << "cell";
    for (const auto& c : report.columns) out << "," << c.column;
    out << "\n";
    for (const auto& cell : report.cells) {
      out << cell;
      for (const auto& c : report.columns) {
        const auto it = c.error_reduction.find(cell);
        out << "," << (it == c.error_reduction.end() ? "" : fmt2(it->second));
      }
      out << "\n";
    }
  }
  {
    auto out = open(tables / "oracle.csv");
    out << "image,best_method,miou_i\n";
    for (const auto& [image, method] : report.oracle.best_method) {
      out << image << "," << method << "," << fmt2(report.oracle.best_score.at(image)) << "\n";
    }
    out << "aggregate,," << fmt2(report.oracle.aggregate) << "\n";
  }
  {
    auto out = open(tables / "entropy_fit.csv");
    out << "column,slope,intercept\n";
    for (const auto& c : report.columns) {
      std::vector<double> x, y;
      try {
        const LinearFit fit = entropy_improvement_fit(table, c.column, &x, &y);
        out << c.column << "," << fmt(fit.slope) << "," << fmt(fit.intercept) << "\n";
        std::string name = c.column;
        std::replace(name.begin(), name.end(), '/', '_');
        plot::scatter_plot(c.column + ": gain vs NA entropy", x, y, "NA entropy", "dmIoU_i",
                           &fit.slope, &fit.intercept)
            .save((figures / ("entropy_" + name + ".png")).string());
      } catch (const std::invalid_argument&) {
        out << c.column << ",,\n";
      }
    }
  }

  // One error-reduction bar chart per severity level.
  std::map<int, std::vector<std::string>> kinds_by_level;
  for (const auto& cell : report.cells) {
    const auto at = cell.find("@L");
    kinds_by_level[std::stoi(cell.substr(at + 2))].push_back(cell.substr(0, at));
  }
  for (const auto& [level, kinds] : kinds_by_level) {
    std::vector<plot::Series> series;
    for (const auto& c : report.columns) {
      plot::Series s{c.column, {}};
      for (const auto& k : kinds) {
        const auto it = c.error_reduction.find(k + "@L" + std::to_string(level));
        s.values.push_back(it == c.error_reduction.end() ? kNaN : it->second);
      }
      series.push_back(std::move(s));
    }
    plot::bar_chart("Error reduction, level " + std::to_string(level), kinds, series, "%")
        .save((figures / ("error_reduction_L" + std::to_string(level) + ".png")).string());
  }

  std::map<std::string, int> wins;
  for (const auto& [image, method] : report.oracle.best_method) ++wins[method];
  std::vector<std::string> names;
  plot::Series s{"images", {}};
  for (const auto& [method, n] : wins) {
    names.push_back(method);
    s.values.push_back(n);
  }
  plot::bar_chart("Oracle picks", names, {s}, "images")
      .save((figures / "oracle_picks.png").string());
}

}  // namespace sitta::harness
