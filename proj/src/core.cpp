#include "sitta/core.hpp"

#include <cstring>
#include <stdexcept>

#include "sitta/nn/checkpoint.hpp"
#include "sitta/nn/optim.hpp"
#include "sitta/toy_segmenter.hpp"

namespace sitta::core {
namespace {

class ToySegmenterAdapter final : public ModelAdapter {
 public:
  ToySegmenterAdapter(int num_classes, int width, bool norm)
      : net_(num_classes, width, norm) {}

  std::string architecture() const override {
    return net_.has_norm() ? "toy-segmenter" : "toy-segmenter-nonorm";
  }
  int num_classes() const override { return net_.num_classes(); }

  LogitMask forward(const TensorF& images) override { return net_.forward(images); }
  TensorF backward(const TensorF& grad_logits, nn::GradRequest req) override {
    return net_.backward(grad_logits, req);
  }

  std::vector<Param*> parameters() override { return net_.parameters(); }
  std::vector<ParamBuffer*> buffers() override { return net_.buffers(); }

  void set_training(bool training) override { net_.set_training(training); }
  bool training() const override { return net_.training(); }

  void init(std::uint64_t seed) override { net_.init(seed); }
  std::unique_ptr<ModelAdapter> clone() const override {
    return std::make_unique<ToySegmenterAdapter>(*this);
  }
  std::map<std::string, std::string> config() const override {
    return {{"num_classes", std::to_string(net_.num_classes())},
            {"width", std::to_string(net_.width())}};
  }

 private:
  ToySegmenter<float> net_;
};

int config_int(const std::map<std::string, std::string>& cfg, const char* key,
               int fallback) {
  auto it = cfg.find(key);
  return it == cfg.end() ? fallback : std::stoi(it->second);
}

}  // namespace

void ModelAdapter::zero_grad() { nn::zero_grad(parameters()); }

void ModelAdapter::save(const std::string& path) {
  nn::Checkpoint ckpt;
  ckpt.meta = config();
  ckpt.meta["architecture"] = architecture();
  nn::store(ckpt, parameters(), buffers());
  ckpt.save(path);
}

std::string to_string(ParamScope scope) {
  return scope == ParamScope::kFull ? "full" : "norm";
}

ParamScope parse_scope(const std::string& text) {
  if (text == "full") return ParamScope::kFull;
  if (text == "norm" || text == "norm-affine") return ParamScope::kNormAffine;
  throw std::invalid_argument("unknown parameter scope: " + text);
}

WeightSnapshot snapshot_weights(ModelAdapter& model) {
  WeightSnapshot snap;
  for (auto* p : model.parameters()) {
    snap.names_.push_back(p->name);
    snap.values_.push_back(p->value);
  }
  return snap;
}

void restore_weights(ModelAdapter& model, const WeightSnapshot& snap) {
  auto params = model.parameters();
  if (params.size() != snap.values_.size()) {
    throw std::invalid_argument("restore_weights: parameter count mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->name != snap.names_[i] ||
        params[i]->value.size() != snap.values_[i].size()) {
      throw std::invalid_argument("restore_weights: shape mismatch at " +
                                  params[i]->name);
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i]->value = snap.values_[i];
  }
}

std::vector<Param*> select_params(ModelAdapter& model, ParamScope scope) {
  auto all = model.parameters();
  if (scope == ParamScope::kFull) return all;
  std::vector<Param*> out;
  for (auto* p : all) {
    if (p->norm_affine) out.push_back(p);
  }
  if (out.empty()) {
    throw std::invalid_argument("select_params: model '" + model.architecture() +
                                "' has no normalization layers");
  }
  return out;
}

std::uint64_t parameter_hash(ModelAdapter& model) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  for (auto* p : model.parameters()) {
    mix(p->value.data(), p->value.size() * sizeof(float));
  }
  for (auto* b : model.buffers()) {
    mix(b->value.data(), b->value.size() * sizeof(float));
  }
  return h;
}

ModelRegistry::ModelRegistry() {
  add("toy-segmenter", [](const std::map<std::string, std::string>& cfg) {
    return std::unique_ptr<ModelAdapter>(std::make_unique<ToySegmenterAdapter>(
        config_int(cfg, "num_classes", 4), config_int(cfg, "width", 8), true));
  });
  add("toy-segmenter-nonorm", [](const std::map<std::string, std::string>& cfg) {
    return std::unique_ptr<ModelAdapter>(std::make_unique<ToySegmenterAdapter>(
        config_int(cfg, "num_classes", 4), config_int(cfg, "width", 8), false));
  });
}

ModelRegistry& ModelRegistry::instance() {
  static ModelRegistry registry;
  return registry;
}

void ModelRegistry::add(const std::string& architecture, ModelFactory factory) {
  factories_[architecture] = std::move(factory);
}

bool ModelRegistry::contains(const std::string& architecture) const {
  return factories_.count(architecture) > 0;
}

std::vector<std::string> ModelRegistry::architectures() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : factories_) out.push_back(k);
  return out;
}

std::unique_ptr<ModelAdapter> ModelRegistry::create(
    const std::string& architecture,
    const std::map<std::string, std::string>& config) const {
  auto it = factories_.find(architecture);
  if (it == factories_.end()) {
    throw std::invalid_argument("unknown architecture: " + architecture);
  }
  return it->second(config);
}

std::unique_ptr<ModelAdapter> load_model(const std::string& checkpoint_path,
                                         const std::string& architecture) {
  const auto ckpt = nn::Checkpoint::load(checkpoint_path);
  auto it = ckpt.meta.find("architecture");
  if (it == ckpt.meta.end() || it->second != architecture) {
    throw std::runtime_error("checkpoint " + checkpoint_path +
                             " was not written for architecture " + architecture);
  }
  auto model = ModelRegistry::instance().create(architecture, ckpt.meta);
  nn::restore(ckpt, model->parameters(), model->buffers());
  model->set_training(false);
  return model;
}

std::unique_ptr<ModelAdapter> make_toy_segmenter(int num_classes, int width,
                                                 bool norm, std::uint64_t seed) {
  auto model = ModelRegistry::instance().create(
      norm ? "toy-segmenter" : "toy-segmenter-nonorm",
      {{"num_classes", std::to_string(num_classes)}, {"width", std::to_string(width)}});
  model->init(seed);
  return model;
}

}  // namespace sitta::core
