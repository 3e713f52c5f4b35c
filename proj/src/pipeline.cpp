#include "sitta/pipeline.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include <CLI11.hpp>

#include "sitta/attacks.hpp"
#include "sitta/auxnets.hpp"
#include "sitta/core.hpp"
#include "sitta/dataset.hpp"
#include "sitta/harness.hpp"
#include "sitta/image_io.hpp"
#include "sitta/testbed.hpp"
#include "sitta/tta.hpp"

namespace sitta::pipeline {

namespace fs = std::filesystem;

namespace {

std::unique_ptr<core::ModelAdapter> open_model(const config::ExperimentConfig& cfg) {
  if (!fs::exists(cfg.model_checkpoint)) {
    throw std::runtime_error("missing model checkpoint " + cfg.model_checkpoint);
  }
  return core::load_model(cfg.model_checkpoint, cfg.architecture);
}

void require_dataset(const std::string& root) {
  if (!fs::exists(fs::path(root) / "index.jsonl")) {
    throw std::runtime_error("no dataset at " + root + " (index.jsonl missing)");
  }
}

std::uint64_t seed_of(const config::ExperimentConfig& cfg, const RunOptions& opt) {
  return opt.seed ? *opt.seed : cfg.seed;
}

std::string fixed(double v, int digits = 2) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(digits) << v;
  return ss.str();
}

}  // namespace

int make_shapes(const config::ExperimentConfig& cfg, std::ostream& log) {
  testbed::ShapesSpec spec;
  spec.size = cfg.testbed.size;
  spec.seed = cfg.testbed.seed;
  const auto samples = testbed::make_shapes_dataset(cfg.testbed.images, spec);
  data::write_dataset(cfg.dataset_root, samples);
  log << "wrote " << samples.size() << " shapes images to " << cfg.dataset_root << "\n";
  return kOk;
}

int train_segmenter(const config::ExperimentConfig& cfg, std::ostream& log) {
  require_dataset(cfg.dataset_root);
  const auto samples = data::load_dataset(cfg.dataset_root);
  testbed::TrainOptions opt;
  opt.epochs = cfg.testbed.epochs;
  opt.lr = cfg.testbed.lr;
  opt.width = cfg.testbed.width;
  opt.seed = cfg.seed;
  auto trained = testbed::train_toy_segmenter(samples, opt);
  for (std::size_t e = 0; e < trained.epoch_loss.size(); ++e) {
    log << "epoch " << e + 1 << " loss " << fixed(trained.epoch_loss[e], 4) << "\n";
  }
  fs::create_directories(fs::path(cfg.model_checkpoint).parent_path());
  trained.model->save(cfg.model_checkpoint);
  log << "training-set mIoU_i " << fixed(testbed::evaluate_miou_i(*trained.model, samples))
      << "\nsaved " << cfg.model_checkpoint << "\n";
  return kOk;
}

int corrupt(const config::ExperimentConfig& cfg, const RunOptions& opt, std::ostream& log) {
  require_dataset(cfg.dataset_root);
  const auto sources = data::source_images(cfg.dataset_root);
  const std::uint64_t seed = opt.seed ? *opt.seed : cfg.corruption_seed;
  const auto index = corruptions::derive_corrupted_dataset(sources, cfg.kinds, cfg.levels, seed);
  log << "corpus entries: " << index.entries.size() << " (" << sources.size() << " images x "
      << cfg.kinds.size() << " kinds x " << cfg.levels.size() << " levels)\n";
  if (opt.dry_run) return kOk;
  corruptions::materialize_corpus(index, cfg.corpus_root);
  data::copy_masks(index, cfg.dataset_root, cfg.corpus_root);
  log << "wrote " << cfg.corpus_root << "\n";
  return kOk;
}

int train_aux(const config::ExperimentConfig& cfg, const RunOptions& opt, std::ostream& log) {
  require_dataset(cfg.dataset_root);
  auto model = open_model(cfg);
  auto samples = data::load_dataset(cfg.dataset_root);
  const auto& t = cfg.aux_train;
  if (t.max_images > 0 && static_cast<int>(samples.size()) > t.max_images) {
    samples.resize(t.max_images);
  }
  attacks::AttackConfig attack;
  attack.steps = t.attack_steps;
  attack.step = t.attack_step;
  attack.seed = seed_of(cfg, opt);
  log << "generating refiner pairs from " << samples.size() << " images\n";
  if (opt.dry_run) return kOk;
  const auto pairs = auxnets::gen_refiner_pairs(*model, samples, attack, t.harvest, t.target);

  auxnets::AuxTrainOptions train;
  train.epochs = t.epochs;
  train.lr = t.lr;
  train.width = t.width;
  train.seed = seed_of(cfg, opt);
  auto refiner = auxnets::train_refiner(pairs, train);
  auto estimator = auxnets::train_diou(auxnets::make_iou_pairs(pairs), train);

  fs::create_directories(fs::path(cfg.refiner_path).parent_path());
  fs::create_directories(fs::path(cfg.estimator_path).parent_path());
  refiner.refiner->save(cfg.refiner_path);
  estimator.estimator->save(cfg.estimator_path);

  const fs::path curves = fs::path(cfg.output_dir) / "aux" / "curves.csv";
  fs::create_directories(curves.parent_path());
  std::ofstream out(curves);
  out << "epoch,refiner_train_ce,refiner_val_ce,diou_train_mse,diou_val_mse\n";
  for (int e = 0; e < t.epochs; ++e) {
    auto at = [e](const std::vector<double>& v) {
      return e < static_cast<int>(v.size()) ? std::to_string(v[e]) : std::string();
    };
    out << e + 1 << "," << at(refiner.curve.train_loss) << "," << at(refiner.curve.val_loss) << ","
        << at(estimator.curve.train_loss) << "," << at(estimator.curve.val_loss) << "\n";
  }
  log << pairs.size() << " pairs; refiner CE " << fixed(refiner.curve.train_loss.front(), 4)
      << " -> " << fixed(refiner.curve.train_loss.back(), 4) << "; dIoU MSE "
      << fixed(estimator.curve.train_loss.front(), 5) << " -> "
      << fixed(estimator.curve.train_loss.back(), 5) << "\nsaved " << cfg.refiner_path << " and "
      << cfg.estimator_path << "\n";
  return kOk;
}

int adapt(const config::ExperimentConfig& cfg, const RunOptions& opt, std::ostream& log) {
  require_dataset(cfg.corpus_root);
  auto model = open_model(cfg);
  std::unique_ptr<auxnets::UNetRefiner> refiner;
  std::unique_ptr<auxnets::DeepIoUEstimator> estimator;
  if (tta::needs_refiner(cfg.adapt.method)) refiner = auxnets::UNetRefiner::load(cfg.refiner_path);
  if (tta::needs_estimator(cfg.adapt.method)) {
    estimator = auxnets::DeepIoUEstimator::load(cfg.estimator_path);
  }
  const tta::AuxModels aux{refiner.get(), estimator.get()};

  auto samples = data::load_dataset(cfg.corpus_root);
  if (!opt.image.empty()) {
    std::erase_if(samples, [&](const data::Sample& s) { return s.id != opt.image; });
    if (samples.empty()) throw std::runtime_error("no image with id " + opt.image);
  }
  log << samples.size() << " images, config " << cfg.adapt.key() << "\n";
  if (opt.dry_run) return kOk;

  const fs::path dir = fs::path(cfg.output_dir) / "adapt";
  fs::create_directories(dir / "masks");
  std::ofstream records(dir / "records.jsonl", std::ios::binary);
  double na = 0, final = 0;
  int scored = 0;
  for (const auto& s : samples) {
    tta::TTAConfig c = cfg.adapt;
    c.seed = harness::job_seed(seed_of(cfg, opt), s.id);
    const auto rec = tta::adapt_single_image(*model, s.image, c, aux, s.mask, s.id);
    records << rec.to_json().dump() << "\n";
    io::write_mask_png((dir / "masks" / (s.id + ".png")).string(), rec.final().mask);
    if (rec.na().miou_i && rec.final().miou_i) {
      na += *rec.na().miou_i;
      final += *rec.final().miou_i;
      ++scored;
    }
  }
  if (scored > 0) {
    log << "mIoU_i NA " << fixed(na / scored) << " -> TTA " << fixed(final / scored) << "\n";
  }
  log << "wrote " << (dir / "records.jsonl").string() << "\n";
  return kOk;
}

int grid(const config::ExperimentConfig& cfg, const RunOptions& opt, std::ostream& log) {
  require_dataset(cfg.corpus_root);
  const auto configs = cfg.grid_configs();
  if (opt.dry_run) {
    const auto index =
        corruptions::CorpusIndex::load_jsonl((fs::path(cfg.corpus_root) / "index.jsonl").string());
    log << "jobs: " << index.entries.size() * configs.size() << " (" << index.entries.size()
        << " images x " << configs.size() << " configs)\n";
    return kOk;
  }
  auto model = open_model(cfg);
  const auto samples = data::load_dataset(cfg.corpus_root);
  harness::GridOptions go;
  go.budget = cfg.grid.iterations;
  go.workers = opt.workers ? *opt.workers : cfg.grid.workers;
  go.seed = seed_of(cfg, opt);
  go.results_dir = cfg.results_dir();
  go.max_jobs = opt.max_jobs;
  if (fs::exists(cfg.refiner_path)) go.aux.refiner = cfg.refiner_path;
  if (fs::exists(cfg.estimator_path)) go.aux.estimator = cfg.estimator_path;
  const auto outcome = harness::grid_search(samples, *model, configs, go);
  log << "jobs: " << outcome.planned << " planned, " << outcome.skipped << " already done, "
      << outcome.executed << " run\n";
  if (!outcome.complete) {
    log << "grid incomplete; rerun to resume\n";
    return kIncomplete;
  }
  log << "wrote " << cfg.results_dir() << "/results.csv\n";
  return kOk;
}

int report(const config::ExperimentConfig& cfg, std::ostream& log) {
  const fs::path store = fs::path(cfg.results_dir()) / "results.jsonl";
  harness::ResultTable table;
  if (fs::exists(store)) table = harness::ResultTable::load_jsonl(store.string());
  if (table.empty()) {
    log << "no results in " << cfg.results_dir() << "\n";
    return kFailure;
  }
  const auto rep = harness::aggregate_report(table, cfg.granularity);
  harness::write_report(rep, table, cfg.report_dir());
  log << std::left << std::setw(18) << "column" << std::right << std::setw(8) << "NA"
      << std::setw(8) << "TTA" << std::setw(8) << "Delta" << "\n";
  for (const auto& c : rep.columns) {
    log << std::left << std::setw(18) << c.column << std::right << std::setw(8) << fixed(c.na)
        << std::setw(8) << fixed(c.tta) << std::setw(8) << harness::format_delta(c.delta) << "\n";
  }
  log << "oracle " << fixed(rep.oracle.aggregate) << "\nwrote " << cfg.report_dir() << "\n";
  return kOk;
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Single-image test-time adaptation for semantic segmentation"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  RunOptions opt;
  std::uint64_t seed = 0;
  int workers = 0;
  std::size_t max_jobs = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Override the global seed");
  auto* workers_opt = app.add_option("--workers", workers, "Worker threads for grid")
                          ->check(CLI::PositiveNumber);
  app.add_flag("--dry-run", opt.dry_run, "Report the planned work and write nothing");
  app.add_option("-c,--config", config_path, "Experiment configuration (YAML)")->required();

  auto* c_shapes = app.add_subcommand("make-shapes", "Generate the synthetic shapes dataset");
  auto* c_train = app.add_subcommand("train-segmenter", "Train the toy segmenter");
  auto* c_corrupt = app.add_subcommand("corrupt", "Derive the corrupted corpus");
  auto* c_aux = app.add_subcommand("train-aux", "Train the mask refiner and IoU estimator");
  auto* c_adapt = app.add_subcommand("adapt", "Adapt corpus images with the adapt config");
  c_adapt->add_option("--image", opt.image, "Only this image id");
  auto* c_grid = app.add_subcommand("grid", "Run the resumable hyper-parameter grid");
  auto* max_jobs_opt =
      c_grid->add_option("--max-jobs", max_jobs, "Stop after this many new jobs");
  auto* c_report = app.add_subcommand("report", "Write tables and figures from stored results");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  if (*seed_opt) opt.seed = seed;
  if (*workers_opt) opt.workers = workers;
  if (*max_jobs_opt) opt.max_jobs = max_jobs;

  config::ExperimentConfig cfg;
  try {
    cfg = config::load_config(config_path);
  } catch (const config::ConfigError& e) {
    std::cerr << "invalid configuration: " << e.what() << "\n";
    return kUsage;
  }
  if (opt.seed) cfg.seed = *opt.seed;

  if (opt.dry_run && (c_shapes->parsed() || c_train->parsed())) {
    std::cout << (c_shapes->parsed() ? "would write " + std::to_string(cfg.testbed.images) +
                                           " shapes images to " + cfg.dataset_root
                                     : "would train on " + cfg.dataset_root + " and save " +
                                           cfg.model_checkpoint)
              << "\n";
    return kOk;
  }
  try {
    if (c_shapes->parsed()) return make_shapes(cfg, std::cout);
    if (c_train->parsed()) return train_segmenter(cfg, std::cout);
    if (c_corrupt->parsed()) return corrupt(cfg, opt, std::cout);
    if (c_aux->parsed()) return train_aux(cfg, opt, std::cout);
    if (c_adapt->parsed()) return adapt(cfg, opt, std::cout);
    if (c_grid->parsed()) return grid(cfg, opt, std::cout);
    if (c_report->parsed()) return report(cfg, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}

}  // namespace sitta::pipeline
