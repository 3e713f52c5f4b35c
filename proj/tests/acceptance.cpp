// Acceptance suite: one PASS/FAIL line per criterion. Self-contained; all
// artifacts go under the work directory given as the only argument.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "loss_checks.hpp"
#include "metric_oracle.hpp"
#include "sitta/attacks.hpp"
#include "sitta/auxnets.hpp"
#include "sitta/core.hpp"
#include "sitta/corruptions.hpp"
#include "sitta/harness.hpp"
#include "sitta/metrics.hpp"
#include "sitta/ops.hpp"
#include "sitta/testbed.hpp"
#include "sitta/tta.hpp"

namespace fs = std::filesystem;
using namespace sitta;
using Clock = std::chrono::steady_clock;

namespace {

// Pinned tolerances and budgets.
constexpr double kMetricTol = 1e-9;
constexpr double kMetricSeconds = 30;
constexpr double kErrorReductionTol = 0.05;
constexpr double kGradTol = 1e-4;
constexpr double kGradSeconds = 60;
constexpr double kEntropyFraction = 0.90;
constexpr double kRefinerGain = 5.0;
constexpr double kAgreementViolations = 0.05;
constexpr double kSelectionSlack = 1e-9;  // float summation order only
constexpr double kPipelineSeconds = 30 * 60;

constexpr int kClasses = 4;
constexpr std::uint64_t kSourceSeed = 1;
constexpr std::uint64_t kCorpusSeed = 2000;
constexpr std::uint64_t kHeldoutPairSeed = 3000;
constexpr std::uint64_t kEntTuneSeed = 4000;
constexpr std::uint64_t kEntEvalSeed = 5000;
constexpr std::uint64_t kAttackSeed = 6000;
constexpr std::uint64_t kRestartSeed = 7000;

const std::vector<double> kGridLrs = {1e-3, 1e-2, 1e-1};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

std::string fmt(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

class Verdicts {
 public:
  void record(int id, const std::string& name, bool pass, const std::string& detail) {
    std::cout << "  criterion " << id << " done" << std::endl;
    lines_[id] = std::string(pass ? "PASS" : "FAIL") + " [" + std::to_string(id) + "] " + name +
                 ": " + detail;
    failures_ += !pass;
  }
  void print() const {
    for (const auto& [id, line] : lines_) std::cout << line << "\n";
    std::cout << (failures_ == 0 ? "all criteria passed" : std::to_string(failures_) + " criteria failed")
              << std::endl;
  }
  // Runs `body`, turning an exception into a failing line.
  void run(int id, const std::string& name, const std::function<std::pair<bool, std::string>()>& body) {
    try {
      const auto [pass, detail] = body();
      record(id, name, pass, detail);
    } catch (const std::exception& e) {
      record(id, name, false, std::string("exception: ") + e.what());
    }
  }
  int failures() const { return failures_; }

 private:
  int failures_ = 0;
  std::map<int, std::string> lines_;
};

std::vector<data::Sample> shapes(int n, std::uint64_t seed) {
  testbed::ShapesSpec spec;
  spec.seed = seed;
  return testbed::make_shapes_dataset(n, spec);
}

data::Sample corrupt_sample(data::Sample s, corruptions::CorruptionKind kind, int level,
                            std::uint64_t seed) {
  s.image = corruptions::apply_corruption(s.image, {kind, level, seed});
  s.source_id = s.id;
  s.id += "__" + corruptions::to_string(kind) + "__L" + std::to_string(level);
  s.kind = kind;
  s.level = level;
  return s;
}

double miou_i_of(const LabelMask& pred, const LabelMask& gt) {
  const auto v = metrics::miou_i(metrics::confusion_counts(pred, gt, kClasses));
  return v ? *v : 100.0;
}

// ---------------------------------------------------------------------------
// Shared testbed artifacts.

struct Testbed {
  std::unique_ptr<core::ModelAdapter> model;
  std::string checkpoint;
  std::uint64_t hash = 0;
  std::unique_ptr<auxnets::UNetRefiner> refiner;
  std::unique_ptr<auxnets::DeepIoUEstimator> estimator;
  harness::AuxPaths aux_paths;
  double segmenter_seconds = 0;
  double aux_seconds = 0;
};

Testbed build_testbed(const fs::path& work) {
  Testbed tb;
  auto t0 = Clock::now();
  const auto source = shapes(200, kSourceSeed);
  testbed::TrainOptions opt;
  opt.seed = kSourceSeed;
  auto trained = testbed::train_toy_segmenter(source, opt);
  tb.model = std::move(trained.model);
  tb.checkpoint = (work / "segmenter.ckpt").string();
  tb.model->save(tb.checkpoint);
  tb.hash = core::parameter_hash(*tb.model);
  tb.segmenter_seconds = seconds_since(t0);
  std::cout << "  segmenter: " << fmt(tb.segmenter_seconds, 1) << " s, held-out clean mIoU_i "
            << fmt(testbed::evaluate_miou_i(*tb.model, shapes(40, kCorpusSeed))) << std::endl;

  t0 = Clock::now();
  const std::vector<data::Sample> aux_images(source.begin(), source.begin() + 60);
  attacks::AttackConfig attack;
  attack.step = 4.0 / 255.0;
  const auto pairs = auxnets::gen_refiner_pairs(*tb.model, aux_images, attack, {0, 2, 4, 6, 8, 10},
                                                auxnets::TargetKind::kPredictions);
  auxnets::AuxTrainOptions aux;
  aux.width = 8;
  aux.epochs = 20;
  aux.seed = 5;
  tb.refiner = auxnets::train_refiner(pairs, aux).refiner;
  tb.estimator = auxnets::train_diou(auxnets::make_iou_pairs(pairs), aux).estimator;
  tb.aux_paths = {(work / "refiner.ckpt").string(), (work / "diou.ckpt").string()};
  tb.refiner->save(tb.aux_paths.refiner);
  tb.estimator->save(tb.aux_paths.estimator);
  tb.aux_seconds = seconds_since(t0);
  std::cout << "  aux nets: " << pairs.size() << " pairs, " << fmt(tb.aux_seconds, 1) << " s"
            << std::endl;
  return tb;
}

// ---------------------------------------------------------------------------
// Criteria.

std::pair<bool, std::string> metric_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1000);
  double worst = 0;
  int cases = 0;
  while (cases < 1000) {
    const auto rc = oracle::random_case(rng);
    std::vector<metrics::PerImageCounts> counts;
    std::vector<oracle::Pixels> px;
    for (const auto& [p, g] : rc.images) {
      counts.push_back(metrics::confusion_counts(p, g, rc.classes));
      px.push_back(oracle::pixels(p, g));
    }
    if (oracle::concat(px).empty()) continue;
    ++cases;
    const double diffs[] = {
        metrics::miou(counts) - oracle::miou(px, rc.classes),
        metrics::miou_c(counts) - oracle::miou_c(px, rc.classes),
        metrics::miou_i_mean(counts) - oracle::miou_i(px, rc.classes),
        metrics::mdice(counts) - oracle::mdice(px, rc.classes),
        metrics::pixel_accuracy(counts) - oracle::accuracy(px),
    };
    for (double d : diffs) worst = std::max(worst, std::isnan(d) ? INFINITY : std::abs(d));
  }
  const double secs = seconds_since(t0);
  return {worst <= kMetricTol && secs < kMetricSeconds,
          std::to_string(cases) + " cases, max |diff| " + sci(worst) + " (tol 1e-9), " +
              fmt(secs, 2) + " s (limit 30)"};
}

std::pair<bool, std::string> error_reduction_arithmetic() {
  const double er = metrics::error_reduction(55.01, 58.30);
  return {std::abs(er - 7.31) <= kErrorReductionTol,
          "error_reduction(55.01, 58.30) = " + fmt(er, 4) + " (expect 7.31 +- 0.05)"};
}

std::pair<bool, std::string> derivation_count() {
  std::vector<corruptions::SourceImage> sources;
  for (int i = 0; i < 40; ++i) sources.push_back({"shape_" + std::to_string(i), "/nonexistent.png"});
  const auto idx = corruptions::derive_corrupted_dataset(sources, corruptions::default_kinds(),
                                                         {1, 3, 5}, 1);
  std::set<std::string> ids;
  std::map<std::pair<std::string, int>, int> per_cell;
  for (const auto& e : idx.entries) {
    ids.insert(e.id);
    ++per_cell[{corruptions::to_string(e.kind), e.level}];
  }
  bool even = per_cell.size() == 30;
  for (const auto& [cell, n] : per_cell) even = even && n == 40;
  return {idx.entries.size() == 1200 && ids.size() == 1200 && even,
          std::to_string(idx.entries.size()) + " entries, " + std::to_string(ids.size()) +
              " unique ids, " + std::to_string(per_cell.size()) + " (kind, level) cells of 40"};
}

std::pair<bool, std::string> restart_invariant(Testbed& tb) {
  const auto images = shapes(20, kRestartSeed);
  const tta::AuxModels aux{tb.refiner.get(), tb.estimator.get()};
  const tta::Method methods[] = {tta::Method::kEnt,  tta::Method::kPL,  tta::Method::kAugCo,
                                 tta::Method::kAdv,  tta::Method::kRef, tta::Method::kDIoU};
  int mismatches = 0, runs = 0, moved = 0;
  for (const auto m : methods) {
    tta::TTAConfig cfg;
    cfg.method = m;
    cfg.loss = tta::valid_losses(m).front();
    cfg.lr = 1e-2;
    cfg.seed = 3;
    for (const auto& s : images) {
      mismatches += core::parameter_hash(*tb.model) != tb.hash;
      const auto rec = tta::adapt_single_image(*tb.model, s.image, cfg, aux, s.mask, s.id);
      moved += (rec.final().mask != rec.na().mask).any();
      ++runs;
    }
    mismatches += core::parameter_hash(*tb.model) != tb.hash;
  }
  return {mismatches == 0,
          std::to_string(runs) + " adaptations over 6 methods, " + std::to_string(mismatches) +
              " hash mismatches (" + std::to_string(moved) + " runs changed the mask)"};
}

std::pair<bool, std::string> gradient_checks() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(4242);
  double worst[4] = {0, 0, 0, 0};
  for (int trial = 0; trial < 50; ++trial) {
    const TensorD p = test::random_probs(3, 4, 4, rng);
    const TensorD q = test::random_probs(3, 4, 4, rng);
    LabelMask lbl(4, 4);
    for (Eigen::Index i = 0; i < lbl.size(); ++i)
      lbl.data()[i] = static_cast<std::uint8_t>(std::uniform_int_distribution<int>(0, 2)(rng));
    const TensorD t = one_hot<double>(lbl, 3);
    worst[0] = std::max(worst[0], test::gradient_rel_error(
                                      [&](const TensorD& x) { return losses::soft_iou_loss(x, t); }, p));
    worst[1] = std::max(worst[1], test::gradient_rel_error(
                                      [&](const TensorD& x) { return losses::ce_loss(x, lbl); }, p));
    worst[2] = std::max(worst[2], test::gradient_rel_error(
                                      [&](const TensorD& x) { return losses::entropy_loss(x); }, p));
    worst[3] = std::max(worst[3], test::gradient_rel_error(
                                      [&](const TensorD& x) { return losses::reverse_kl(x, q); }, p));
  }
  const double secs = seconds_since(t0);
  const double max = *std::max_element(worst, worst + 4);
  return {max < kGradTol && secs < kGradSeconds,
          "50 cases, max rel error iou " + sci(worst[0]) + ", ce " +
              sci(worst[1]) + ", ent " + sci(worst[2]) + ", rkl " +
              sci(worst[3]) + " (tol 1e-4), " + fmt(secs, 2) + " s (limit 60)"};
}

// Fraction of images whose final entropy is below the NA entropy, and the
// mean entropy change.
std::pair<double, double> entropy_drop(core::ModelAdapter& model,
                                       const std::vector<data::Sample>& images, double lr) {
  tta::TTAConfig cfg;
  cfg.method = tta::Method::kEnt;
  cfg.loss = tta::LossKind::kEnt;
  cfg.scope = core::ParamScope::kNormAffine;
  cfg.lr = lr;
  int lower = 0;
  double change = 0;
  for (const auto& s : images) {
    const auto rec = tta::adapt_single_image(model, s.image, cfg, {}, std::nullopt, s.id);
    lower += !rec.diverged && rec.final().entropy < rec.na().entropy;
    change += rec.final().entropy - rec.na().entropy;
  }
  return {static_cast<double>(lower) / images.size(), change / images.size()};
}

std::pair<bool, std::string> entropy_descent(Testbed& tb) {
  auto noisy = [](int n, std::uint64_t seed) {
    auto out = shapes(n, seed);
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = corrupt_sample(out[i], corruptions::CorruptionKind::kGaussianNoise, 3, seed + i);
    return out;
  };
  // lr tuned on a disjoint set: most images improved, then largest mean drop.
  const auto tune = noisy(10, kEntTuneSeed);
  double best_lr = 0;
  std::pair<double, double> best{-1, 0};
  for (const double lr : {1e-3, 1e-2, 1e-1, 1.0}) {
    const auto r = entropy_drop(*tb.model, tune, lr);
    if (r.first > best.first || (r.first == best.first && r.second < best.second)) {
      best = r;
      best_lr = lr;
    }
  }
  const auto eval = entropy_drop(*tb.model, noisy(50, kEntEvalSeed), best_lr);
  return {eval.first >= kEntropyFraction,
          "tuned lr " + fmt(best_lr, 3) + ": entropy reduced on " + fmt(100 * eval.first, 0) +
              "% of 50 images (need >= 90%), mean change " + fmt(eval.second, 4)};
}

// 40 source images, level 1, kinds assigned round-robin.
std::vector<data::Sample> level1_corpus() {
  auto images = shapes(40, kCorpusSeed);
  const auto& kinds = corruptions::default_kinds();
  for (std::size_t i = 0; i < images.size(); ++i)
    images[i] = corrupt_sample(images[i], kinds[i % kinds.size()], 1, kCorpusSeed + i);
  return images;
}

std::vector<tta::TTAConfig> grid_configs() {
  std::vector<tta::TTAConfig> out;
  for (const auto m : {tta::Method::kPL, tta::Method::kRef, tta::Method::kEnt})
    for (const auto l : tta::valid_losses(m))
      for (const auto scope : {core::ParamScope::kFull, core::ParamScope::kNormAffine})
        for (const double lr : kGridLrs) {
          tta::TTAConfig c;
          c.method = m;
          c.loss = l;
          c.scope = scope;
          c.lr = lr;
          out.push_back(c);
        }
  return out;
}

// Rows of one method/loss pair across both scopes.
harness::ResultTable subset(const harness::ResultTable& table, tta::Method m, tta::LossKind l) {
  harness::ResultTable out;
  for (const auto& r : table.rows())
    if (r.config.method == m && r.config.loss == l) out.add(r);
  return out;
}

double selected_aggregate(const harness::ResultTable& t, harness::Granularity g) {
  return harness::mean_score(harness::selected_scores(t, harness::select_hparams(t, g), g));
}

std::pair<bool, std::string> directional_gain(const harness::ResultTable& table, const fs::path& report_dir) {
  const double na = harness::mean_score(harness::na_scores(table));
  const double pl_iou = selected_aggregate(subset(table, tta::Method::kPL, tta::LossKind::kIoU),
                                           harness::Granularity::kOverall);
  const double pl_ce = selected_aggregate(subset(table, tta::Method::kPL, tta::LossKind::kCE),
                                          harness::Granularity::kOverall);
  const auto report = harness::aggregate_report(table, harness::Granularity::kOverall);
  harness::write_report(report, table, report_dir.string());
  std::ifstream in(report_dir / "tables" / "summary.csv");
  std::vector<std::string> heads;
  for (std::string line; std::getline(in, line);) heads.push_back(line.substr(0, line.find(',')));
  const std::vector<std::string> shape = {"method", "params", "loss", "NA", "TTA", "Delta_ABS"};
  std::set<std::string> columns;
  for (const auto& r : table.rows()) columns.insert(r.column());
  const bool table_shape = heads == shape && report.columns.size() == columns.size();
  return {pl_iou > na && pl_iou >= pl_ce && table_shape,
          "NA " + fmt(na, 3) + ", PL-IoU " + fmt(pl_iou, 3) + ", PL-CE " + fmt(pl_ce, 3) +
              "; report rows " + (table_shape ? "method/params/loss/NA/TTA/Delta_ABS" : "malformed") +
              " with " + std::to_string(report.columns.size()) + " columns"};
}

std::pair<bool, std::string> refiner_value(Testbed& tb, const harness::ResultTable& table) {
  attacks::AttackConfig attack;
  attack.step = 4.0 / 255.0;
  const auto pairs = auxnets::gen_refiner_pairs(*tb.model, shapes(20, kHeldoutPairSeed), attack,
                                                {2, 4, 6, 8, 10}, auxnets::TargetKind::kPredictions);
  double before = 0, after = 0;
  for (const auto& p : pairs) {
    before += miou_i_of(argmax(p.corrupted), p.target);
    after += miou_i_of(argmax(auxnets::refine(*tb.refiner, p.corrupted)), p.target);
  }
  before /= pairs.size();
  after /= pairs.size();
  const double na = harness::mean_score(harness::na_scores(table));
  double ref = -INFINITY;
  std::string best;
  for (const auto l : tta::valid_losses(tta::Method::kRef)) {
    const double v = selected_aggregate(subset(table, tta::Method::kRef, l), harness::Granularity::kOverall);
    if (v > ref) {
      ref = v;
      best = tta::to_string(l);
    }
  }
  return {after - before >= kRefinerGain && ref > na,
          "held-out refined " + fmt(after) + " vs corrupted " + fmt(before) + " (gain " +
              fmt(after - before) + ", need >= 5) over " + std::to_string(pairs.size()) +
              " pairs; Ref-" + best + " TTA " + fmt(ref, 3) + " vs NA " + fmt(na, 3)};
}

std::pair<bool, std::string> attack_properties(Testbed& tb) {
  attacks::AttackConfig cfg;
  cfg.steps = 10;
  cfg.step = 1.0 / 255.0;
  cfg.seed = kAttackSeed;
  int out_of_range = 0, violations = 0, comparisons = 0, hash_changes = 0;
  for (const auto& s : shapes(20, kAttackSeed)) {
    const LogitMask clean = tb.model->forward(s.image);
    const LabelMask clean_mask = argmax(clean);
    const auto traj = attacks::pgd_attack(*tb.model, s.image, attacks::inverted_target(softmax(clean)), cfg);
    hash_changes += core::parameter_hash(*tb.model) != tb.hash;
    double prev = 1.0;
    for (const auto& st : traj) {
      out_of_range += (st.image.flat() < 0.0f).count() + (st.image.flat() > 1.0f).count();
      const double a = (argmax(st.logits) == clean_mask).cast<double>().mean();
      violations += a > prev;
      ++comparisons;
      prev = a;
    }
  }
  const double rate = static_cast<double>(violations) / comparisons;
  return {out_of_range == 0 && hash_changes == 0 && rate <= kAgreementViolations,
          "20 images x 10 steps: " + std::to_string(out_of_range) + " pixels outside [0,1], " +
              std::to_string(hash_changes) + " weight changes, agreement increases " +
              std::to_string(violations) + "/" + std::to_string(comparisons) + " (" +
              fmt(100 * rate, 1) + "%, limit 5%)"};
}

std::pair<bool, std::string> selection_properties(const fs::path& results) {
  const auto table = harness::ResultTable::load_jsonl((results / "results.jsonl").string());
  std::set<std::string> columns;
  for (const auto& r : table.rows()) columns.insert(r.column());
  int granularity_fail = 0, oracle_fail = 0;
  std::map<std::string, std::map<std::string, double>> per_method;
  per_method["NA"] = harness::na_scores(table);
  for (const auto& col : columns) {
    double prev = -INFINITY;
    for (const auto g : {harness::Granularity::kOverall, harness::Granularity::kPerCorruption,
                         harness::Granularity::kPerLevel}) {
      const auto sel = harness::select_hparams(table, g, col);
      const double agg = harness::mean_score(harness::selected_scores(table, sel, g));
      granularity_fail += agg < prev - kSelectionSlack;
      prev = agg;
    }
    const auto overall = harness::select_hparams(table, harness::Granularity::kOverall, col);
    per_method[col] = harness::selected_scores(table, overall, harness::Granularity::kOverall);
  }
  const auto oracle = harness::oracle_select(per_method);
  for (const auto& [name, scores] : per_method) {
    oracle_fail += oracle.aggregate < harness::mean_score(scores) - kSelectionSlack;
    for (const auto& [image, v] : scores) oracle_fail += oracle.best_score.at(image) < v;
  }
  return {!table.empty() && granularity_fail == 0 && oracle_fail == 0,
          std::to_string(table.size()) + " stored rows, " + std::to_string(columns.size()) +
              " columns: " + std::to_string(granularity_fail) + " granularity violations, " +
              std::to_string(oracle_fail) + " oracle violations; oracle aggregate " +
              fmt(oracle.aggregate, 3)};
}

// ---------------------------------------------------------------------------
// Command-line determinism.

int run_cli(const fs::path& dir, const std::string& args) {
  const std::string cmd = "cd '" + dir.string() + "' && '" SITTA_CLI_PATH "' " + args + " >> cli.log 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::pair<bool, std::string> cli_determinism(const Testbed& tb, const fs::path& work) {
  const fs::path dir = work / "cli";
  fs::create_directories(dir);
  std::ofstream(dir / "experiment.yaml")
      << "seed: 7\n"
         "output_dir: out\n"
         "model:\n  checkpoint: " << tb.checkpoint << "\n"
         "testbed:\n  images: 8\n  seed: " << kCorpusSeed << "\n"
         "corruptions:\n  kinds: [gaussian-noise, fog]\n  levels: [1]\n"
         "grid:\n  methods: [PL, Ent]\n  losses: [ce, iou]\n  scopes: [full, norm]\n"
         "  lrs: [0.01]\n  iterations: 10\n";
  const fs::path results = dir / "out" / "results";
  const fs::path csv = results / "results.csv";
  if (run_cli(dir, "-c experiment.yaml make-shapes") != 0 ||
      run_cli(dir, "-c experiment.yaml corrupt") != 0) {
    return {false, "make-shapes/corrupt failed (see " + (dir / "cli.log").string() + ")"};
  }
  fs::remove_all(results);
  if (run_cli(dir, "-c experiment.yaml grid") != 0) return {false, "first grid run failed"};
  const std::string first = slurp(csv);
  fs::remove_all(results);
  if (run_cli(dir, "-c experiment.yaml --workers 2 grid") != 0) return {false, "second grid run failed"};
  const std::string second = slurp(csv);
  fs::remove_all(results);
  const int interrupted = run_cli(dir, "-c experiment.yaml grid --max-jobs 37");
  const std::string partial_csv = slurp(csv);
  const auto partial_rows = std::count(partial_csv.begin(), partial_csv.end(), '\n') - 1;
  const bool partial = partial_rows == 37;
  if (run_cli(dir, "-c experiment.yaml grid") != 0) return {false, "resumed grid run failed"};
  const std::string resumed = slurp(csv);
  const auto rows = std::count(first.begin(), first.end(), '\n');
  const bool ok = !first.empty() && first == second && interrupted == 3 && partial && resumed == first;
  return {ok, std::to_string(rows - 1) + " rows; repeat run " +
                  (first == second ? "byte-identical" : "DIFFERS") + "; interrupted run exit " +
                  std::to_string(interrupted) + " with " + std::to_string(partial_rows) +
                  " rows (expect 37), resumed " +
                  (resumed == first ? "byte-identical" : "DIFFERS")};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = fs::absolute(argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_work"));
  fs::remove_all(work);
  fs::create_directories(work);
  const auto start = Clock::now();
  Verdicts v;

  v.run(1, "metric oracle equivalence", metric_oracle);
  v.run(2, "error reduction arithmetic", error_reduction_arithmetic);
  v.run(3, "dataset derivation count", derivation_count);
  v.run(5, "loss gradient checks", gradient_checks);

  std::cout << "building testbed" << std::endl;
  const auto pipeline_start = Clock::now();
  Testbed tb = build_testbed(work);

  v.run(4, "restart invariant", [&] { return restart_invariant(tb); });
  v.run(9, "attack properties", [&] { return attack_properties(tb); });

  v.run(6, "entropy descent", [&] { return entropy_descent(tb); });

  const fs::path results = work / "grid" / "results";
  harness::ResultTable table;
  {
    const auto t0 = Clock::now();
    harness::GridOptions go;
    go.seed = 11;
    go.results_dir = results.string();
    go.aux = tb.aux_paths;
    auto outcome = harness::grid_search(level1_corpus(), *tb.model, grid_configs(), go);
    table = std::move(outcome.table);
    std::cout << "  grid: " << outcome.executed << " jobs in " << fmt(seconds_since(t0), 1) << " s"
              << std::endl;
    for (const auto& w : outcome.warnings) std::cout << "  warning: " << w << std::endl;
  }
  v.run(7, "directional SITTA gain", [&] { return directional_gain(table, work / "grid" / "report"); });
  v.run(8, "refiner value", [&] { return refiner_value(tb, table); });
  v.run(10, "selection properties", [&] { return selection_properties(results); });
  v.run(11, "determinism and resumability", [&] { return cli_determinism(tb, work); });

  const double pipeline = seconds_since(pipeline_start);
  v.record(12, "end-to-end budget", pipeline < kPipelineSeconds,
           "testbed pipeline " + fmt(pipeline, 1) + " s (limit 1800 s); whole suite " +
               fmt(seconds_since(start), 1) + " s");
  v.print();
  return v.failures() == 0 ? 0 : 1;
}
