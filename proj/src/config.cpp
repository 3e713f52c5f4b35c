#include "sitta/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

namespace sitta::config {

namespace fs = std::filesystem;

ConfigError::ConfigError(const std::string& file, int line, const std::string& message)
    : std::runtime_error(file + ":" + std::to_string(line) + ": " + message), line_(line) {}

namespace {

class Reader {
 public:
  Reader(std::string file, fs::path base) : file_(std::move(file)), base_(std::move(base)) {}

  int line(const YAML::Node& n) const { return n.Mark().line + 1; }

  [[noreturn]] void fail(const YAML::Node& n, const std::string& msg) const {
    throw ConfigError(file_, line(n), msg);
  }

  void require_map(const YAML::Node& n, const std::string& what) const {
    if (!n.IsMap()) fail(n, what + " must be a mapping");
  }

  void check_keys(const YAML::Node& n, const std::string& section,
                  const std::set<std::string>& allowed) const {
    for (const auto& kv : n) {
      const auto key = kv.first.as<std::string>();
      if (!allowed.count(key)) {
        fail(kv.first, "unknown key '" + key + "'" +
                           (section.empty() ? std::string() : " in section '" + section + "'"));
      }
    }
  }

  template <typename T>
  T scalar(const YAML::Node& n, const std::string& name) const {
    if (!n.IsScalar()) fail(n, "'" + name + "' must be a scalar");
    try {
      return n.as<T>();
    } catch (const YAML::Exception&) {
      fail(n, "'" + name + "' has an invalid value '" + n.Scalar() + "'");
    }
  }

  template <typename T>
  std::vector<T> list(const YAML::Node& n, const std::string& name) const {
    if (!n.IsSequence()) fail(n, "'" + name + "' must be a list");
    std::vector<T> out;
    for (const auto& item : n) out.push_back(scalar<T>(item, name));
    return out;
  }

  template <typename T, typename F>
  std::vector<T> parsed_list(const YAML::Node& n, const std::string& name, F parse) const {
    if (!n.IsSequence()) fail(n, "'" + name + "' must be a list");
    std::vector<T> out;
    for (const auto& item : n) {
      const auto text = scalar<std::string>(item, name);
      try {
        out.push_back(parse(text));
      } catch (const std::invalid_argument& e) {
        fail(item, e.what());
      }
    }
    return out;
  }

  template <typename T, typename F>
  T parsed(const YAML::Node& n, const std::string& name, F parse) const {
    const auto text = scalar<std::string>(n, name);
    try {
      return parse(text);
    } catch (const std::invalid_argument& e) {
      fail(n, e.what());
    }
  }

  std::string path(const YAML::Node& n, const std::string& name) const {
    const auto text = scalar<std::string>(n, name);
    if (text.empty()) return text;
    const fs::path p(text);
    return (p.is_absolute() ? p : base_ / p).lexically_normal().string();
  }

  void positive(const YAML::Node& n, double v, const std::string& name) const {
    if (!(v > 0)) fail(n, "'" + name + "' must be positive");
  }

 private:
  std::string file_;
  fs::path base_;
};

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& source_path) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(source_path, e.mark.line + 1, e.msg);
  }
  const fs::path base =
      source_path.empty() ? fs::current_path() : fs::absolute(source_path).parent_path();
  Reader rd(source_path, base);
  ExperimentConfig c;
  c.source_path = source_path;
  if (root.IsNull()) throw ConfigError(source_path, 1, "empty configuration");
  rd.require_map(root, "configuration");
  rd.check_keys(root, "", {"seed", "output_dir", "model", "dataset", "corruptions", "aux", "grid",
                           "adapt", "report", "testbed"});

  if (root["seed"]) c.seed = rd.scalar<std::uint64_t>(root["seed"], "seed");
  if (root["output_dir"]) c.output_dir = rd.path(root["output_dir"], "output_dir");
  else c.output_dir = (base / "out").lexically_normal().string();
  if (const char* env = std::getenv(kOutputRootEnv); env && *env) {
    c.output_dir = fs::absolute(env).lexically_normal().string();
  }
  const fs::path out(c.output_dir);

  if (const auto m = root["model"]) {
    rd.require_map(m, "model");
    rd.check_keys(m, "model", {"checkpoint", "architecture"});
    if (m["checkpoint"]) c.model_checkpoint = rd.path(m["checkpoint"], "checkpoint");
    if (m["architecture"]) {
      c.architecture = rd.scalar<std::string>(m["architecture"], "architecture");
      if (!core::ModelRegistry::instance().contains(c.architecture)) {
        rd.fail(m["architecture"], "unknown architecture '" + c.architecture + "'");
      }
    }
  }
  if (c.model_checkpoint.empty()) c.model_checkpoint = (out / "segmenter.ckpt").string();

  if (const auto d = root["dataset"]) {
    rd.require_map(d, "dataset");
    rd.check_keys(d, "dataset", {"root", "corpus"});
    if (d["root"]) c.dataset_root = rd.path(d["root"], "root");
    if (d["corpus"]) c.corpus_root = rd.path(d["corpus"], "corpus");
  }
  if (c.dataset_root.empty()) c.dataset_root = (out / "shapes").string();
  if (c.corpus_root.empty()) c.corpus_root = (out / "corpus").string();

  c.kinds = corruptions::default_kinds();
  c.levels = corruptions::default_levels();
  if (const auto k = root["corruptions"]) {
    rd.require_map(k, "corruptions");
    rd.check_keys(k, "corruptions", {"kinds", "levels", "seed"});
    if (k["kinds"]) {
      c.kinds = rd.parsed_list<corruptions::CorruptionKind>(k["kinds"], "kinds",
                                                            corruptions::parse_kind);
      if (c.kinds.empty()) rd.fail(k["kinds"], "'kinds' must not be empty");
    }
    if (k["levels"]) {
      c.levels = rd.list<int>(k["levels"], "levels");
      if (c.levels.empty()) rd.fail(k["levels"], "'levels' must not be empty");
      for (int l : c.levels) {
        if (l < 1 || l > 5) rd.fail(k["levels"], "levels must be within 1..5");
      }
    }
    if (k["seed"]) c.corruption_seed = rd.scalar<std::uint64_t>(k["seed"], "seed");
  }

  if (const auto a = root["aux"]) {
    rd.require_map(a, "aux");
    rd.check_keys(a, "aux", {"refiner", "estimator", "train"});
    if (a["refiner"]) c.refiner_path = rd.path(a["refiner"], "refiner");
    if (a["estimator"]) c.estimator_path = rd.path(a["estimator"], "estimator");
    if (const auto t = a["train"]) {
      rd.require_map(t, "aux.train");
      rd.check_keys(t, "aux.train", {"target", "harvest", "attack_steps", "attack_step", "epochs",
                                     "lr", "width", "max_images"});
      auto& s = c.aux_train;
      if (t["target"]) s.target = rd.parsed<auxnets::TargetKind>(t["target"], "target",
                                                                 auxnets::parse_target_kind);
      if (t["attack_steps"]) s.attack_steps = rd.scalar<int>(t["attack_steps"], "attack_steps");
      if (t["harvest"]) {
        s.harvest = rd.list<int>(t["harvest"], "harvest");
        for (int h : s.harvest) {
          if (h < 0 || h > s.attack_steps) {
            rd.fail(t["harvest"], "harvest iterations must lie in [0, attack_steps]");
          }
        }
      }
      if (t["attack_step"]) s.attack_step = rd.scalar<double>(t["attack_step"], "attack_step");
      if (t["epochs"]) s.epochs = rd.scalar<int>(t["epochs"], "epochs");
      if (t["lr"]) {
        s.lr = rd.scalar<double>(t["lr"], "lr");
        rd.positive(t["lr"], s.lr, "lr");
      }
      if (t["width"]) s.width = rd.scalar<int>(t["width"], "width");
      if (t["max_images"]) s.max_images = rd.scalar<int>(t["max_images"], "max_images");
    }
  }
  if (c.refiner_path.empty()) c.refiner_path = (out / "aux" / "refiner.ckpt").string();
  if (c.estimator_path.empty()) c.estimator_path = (out / "aux" / "diou.ckpt").string();

  if (const auto g = root["grid"]) {
    rd.require_map(g, "grid");
    rd.check_keys(g, "grid", {"methods", "losses", "scopes", "lrs", "iterations", "workers"});
    auto& s = c.grid;
    if (g["methods"]) s.methods = rd.parsed_list<tta::Method>(g["methods"], "methods", tta::parse_method);
    if (g["losses"]) s.losses = rd.parsed_list<tta::LossKind>(g["losses"], "losses", tta::parse_loss);
    if (g["scopes"]) {
      s.scopes = rd.parsed_list<core::ParamScope>(g["scopes"], "scopes", core::parse_scope);
    }
    if (g["lrs"]) {
      s.lrs = rd.list<double>(g["lrs"], "lrs");
      for (double lr : s.lrs) rd.positive(g["lrs"], lr, "lrs");
    }
    if (g["iterations"]) {
      s.iterations = rd.scalar<int>(g["iterations"], "iterations");
      if (s.iterations < 0 || s.iterations > tta::kMaxIterations) {
        rd.fail(g["iterations"], "'iterations' must be in [0, 10]");
      }
    }
    if (g["workers"]) {
      s.workers = rd.scalar<int>(g["workers"], "workers");
      if (s.workers < 1) rd.fail(g["workers"], "'workers' must be >= 1");
    }
    if (s.methods.empty() || s.scopes.empty() || s.lrs.empty()) {
      rd.fail(g, "grid needs at least one method, scope and learning rate");
    }
  }

  if (const auto a = root["adapt"]) {
    rd.require_map(a, "adapt");
    rd.check_keys(a, "adapt", {"method", "loss", "scope", "lr", "iterations"});
    auto& t = c.adapt;
    if (a["method"]) {
      t.method = rd.parsed<tta::Method>(a["method"], "method", tta::parse_method);
      if (tta::valid_losses(t.method).size() == 1) t.loss = tta::valid_losses(t.method).front();
    }
    if (a["loss"]) t.loss = rd.parsed<tta::LossKind>(a["loss"], "loss", tta::parse_loss);
    if (a["scope"]) t.scope = rd.parsed<core::ParamScope>(a["scope"], "scope", core::parse_scope);
    if (a["lr"]) t.lr = rd.scalar<double>(a["lr"], "lr");
    if (a["iterations"]) t.iterations = rd.scalar<int>(a["iterations"], "iterations");
    try {
      t.validate();
    } catch (const std::invalid_argument& e) {
      rd.fail(a, e.what());
    }
  }

  if (const auto r = root["report"]) {
    rd.require_map(r, "report");
    rd.check_keys(r, "report", {"granularity"});
    if (r["granularity"]) {
      c.granularity = rd.parsed<harness::Granularity>(r["granularity"], "granularity",
                                                      harness::parse_granularity);
    }
  }

  if (const auto t = root["testbed"]) {
    rd.require_map(t, "testbed");
    rd.check_keys(t, "testbed", {"images", "size", "seed", "epochs", "lr", "width"});
    auto& s = c.testbed;
    if (t["images"]) s.images = rd.scalar<int>(t["images"], "images");
    if (t["size"]) s.size = rd.scalar<int>(t["size"], "size");
    if (t["seed"]) s.seed = rd.scalar<std::uint64_t>(t["seed"], "seed");
    if (t["epochs"]) s.epochs = rd.scalar<int>(t["epochs"], "epochs");
    if (t["lr"]) s.lr = rd.scalar<double>(t["lr"], "lr");
    if (t["width"]) s.width = rd.scalar<int>(t["width"], "width");
    if (s.images < 1) rd.fail(t["images"] ? t["images"] : t, "'images' must be >= 1");
    if (s.size < 8) rd.fail(t["size"] ? t["size"] : t, "'size' must be >= 8");
  }
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, 0, "cannot open configuration file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

std::vector<tta::TTAConfig> ExperimentConfig::grid_configs() const {
  std::vector<tta::TTAConfig> out;
  for (tta::Method m : grid.methods) {
    std::vector<tta::LossKind> losses;
    const auto valid = tta::valid_losses(m);
    if (valid.size() == 1) {
      losses = valid;
    } else {
      for (tta::LossKind l : grid.losses) {
        if (tta::valid_combination(m, l)) losses.push_back(l);
      }
    }
    for (tta::LossKind l : losses)
      for (core::ParamScope s : grid.scopes)
        for (double lr : grid.lrs) {
          tta::TTAConfig cfg = adapt;
          cfg.method = m;
          cfg.loss = l;
          cfg.scope = s;
          cfg.lr = lr;
          cfg.iterations = grid.iterations;
          out.push_back(cfg);
        }
  }
  return out;
}

std::string ExperimentConfig::results_dir() const {
  return (fs::path(output_dir) / "results").string();
}

std::string ExperimentConfig::report_dir() const {
  return (fs::path(output_dir) / "report").string();
}

}  // namespace sitta::config
