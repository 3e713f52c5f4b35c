#include <doctest.h>

#include <cmath>
#include <limits>

#include "helpers.hpp"
#include "stub_models.hpp"
#include "sitta/auxnets.hpp"
#include "sitta/ops.hpp"
#include "sitta/tta.hpp"

using namespace sitta;
using tta::LossKind;
using tta::Method;

namespace {

tta::TTAConfig config(Method m, LossKind l, double lr, int iters = 10,
                      core::ParamScope scope = core::ParamScope::kFull) {
  tta::TTAConfig c;
  c.method = m;
  c.loss = l;
  c.lr = lr;
  c.iterations = iters;
  c.scope = scope;
  return c;
}

LogitMask pixel_logits(std::initializer_list<float> v) {
  LogitMask t(1, static_cast<int>(v.size()), 1, 1);
  int i = 0;
  for (float x : v) t.data()[i++] = x;
  return t;
}

const Image kDummy(1, 3, 1, 1, 0.5f);

// Non-normalization parameters only.
std::uint64_t non_norm_hash(core::ModelAdapter& m) {
  std::uint64_t h = 1469598103934665603ULL;
  for (auto* p : m.parameters()) {
    if (p->norm_affine) continue;
    const auto* bytes = reinterpret_cast<const unsigned char*>(p->value.data());
    for (std::size_t i = 0; i < sizeof(float) * p->value.size(); ++i) h = (h ^ bytes[i]) * 1099511628211ULL;
  }
  return h;
}

}  // namespace

TEST_CASE("config validation, keys and serialization") {
  auto c = config(Method::kPL, LossKind::kIoU, 0.01, 10, core::ParamScope::kNormAffine);
  CHECK_NOTHROW(c.validate());
  CHECK(c.key() == "PL/iou/norm/lr=0.01");
  const auto back = tta::TTAConfig::from_json(c.to_json());
  CHECK(back.key() == c.key());
  CHECK(back.iterations == 10);

  CHECK_THROWS(config(Method::kPL, LossKind::kIoU, 0.01, 11).validate());
  CHECK_THROWS(config(Method::kPL, LossKind::kIoU, -1.0).validate());
  CHECK_THROWS(config(Method::kEnt, LossKind::kCE, 0.01).validate());
  CHECK_THROWS(config(Method::kAdv, LossKind::kIoU, 0.01).validate());
  CHECK_THROWS(config(Method::kDIoU, LossKind::kCE, 0.01).validate());
  CHECK(tta::valid_combination(Method::kRef, LossKind::kCE));
  CHECK(tta::valid_combination(Method::kAugCo, LossKind::kIoU));
  CHECK(tta::valid_combination(Method::kAdv, LossKind::kKL));
  CHECK(tta::valid_combination(Method::kDIoU, LossKind::kNone));
  CHECK(tta::parse_method("diou") == Method::kDIoU);
  CHECK(tta::parse_loss("-") == LossKind::kNone);
  CHECK_THROWS(tta::parse_method("tent"));
}

TEST_CASE("objectives on a fixed single-pixel mask") {
  auto ent_model = test::FixedLogitModel(pixel_logits({30.0f, 0.0f, 0.0f}));
  CHECK(tta::compute_objective(ent_model, kDummy, config(Method::kEnt, LossKind::kEnt, 0.1), {}).value ==
        doctest::Approx(0.0).scale(1.0));

  // p = (0.5, 0.5): pseudo-label 0 by the tie rule, so the PL-IoU objective
  // equals the soft-IoU hand value.
  auto tie = test::FixedLogitModel(pixel_logits({0.0f, 0.0f}));
  CHECK(tta::compute_objective(tie, kDummy, config(Method::kPL, LossKind::kIoU, 0.1), {}).value ==
        doctest::Approx(0.25));
  CHECK(tta::compute_objective(tie, kDummy, config(Method::kPL, LossKind::kCE, 0.1), {}).value ==
        doctest::Approx(std::log(2.0)));

  auto adv = config(Method::kAdv, LossKind::kKL, 0.1);
  adv.adv_step = 0.0;
  auto m = test::FixedLogitModel(pixel_logits({0.3f, -0.2f, 1.0f}));
  CHECK(tta::compute_objective(m, kDummy, adv, {}).value == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("Ref with an identity refiner reduces to PL") {
  auto model = test::pretrained();
  const auto s = test::corrupted(test::heldout_shapes(1, 5), corruptions::CorruptionKind::kGaussianNoise, 3)[0];
  auxnets::IdentityRefiner identity(model->num_classes());
  for (auto loss : {LossKind::kIoU, LossKind::kCE}) {
    model->zero_grad();
    const auto ref = tta::compute_objective(*model, s.image, config(Method::kRef, loss, 0.01), {&identity, nullptr});
    std::vector<ArrayX<float>> ref_grads;
    for (auto* p : model->parameters()) ref_grads.push_back(p->grad);
    model->zero_grad();
    const auto pl = tta::compute_objective(*model, s.image, config(Method::kPL, loss, 0.01), {});
    CHECK(ref.value == doctest::Approx(pl.value).epsilon(1e-9));
    auto params = model->parameters();
    for (std::size_t i = 0; i < params.size(); ++i) CHECK((params[i]->grad == ref_grads[i]).all());
  }
}

TEST_CASE("dIoU minimizes the estimator output") {
  auto model = test::pretrained();
  const auto s = test::heldout_shapes(1, 5)[0];
  auxnets::DeepIoUEstimator est(model->num_classes(), 8);
  est.net().init(3);
  const double expect = est.predict(model->forward(s.image));
  CHECK(tta::compute_objective(*model, s.image, config(Method::kDIoU, LossKind::kNone, 0.01), {nullptr, &est}).value ==
        doctest::Approx(expect));
}

TEST_CASE("missing auxiliaries and training mode are rejected") {
  auto model = test::pretrained();
  const auto s = test::heldout_shapes(1)[0];
  CHECK_THROWS(tta::adapt_single_image(*model, s.image, config(Method::kRef, LossKind::kIoU, 0.01)));
  CHECK_THROWS(tta::adapt_single_image(*model, s.image, config(Method::kDIoU, LossKind::kNone, 0.01)));
  model->set_training(true);
  CHECK_THROWS(tta::adapt_single_image(*model, s.image, config(Method::kEnt, LossKind::kEnt, 0.01)));
}

TEST_CASE("AugCo reliability semantics") {
  ProbMask v(1, 2, 1, 3);
  // Pixel 0: agree, confident. Pixel 1: agree, unsure. Pixel 2: disagree.
  v(0, 0, 0, 0) = 0.9f; v(0, 1, 0, 0) = 0.1f;
  v(0, 0, 0, 1) = 0.6f; v(0, 1, 0, 1) = 0.4f;
  v(0, 0, 0, 2) = 0.6f; v(0, 1, 0, 2) = 0.4f;
  CHECK(tta::augco_reliability(v, v, 0.8).sum() == 3.0f);

  ProbMask v2 = v;
  v2(0, 0, 0, 2) = 0.3f; v2(0, 1, 0, 2) = 0.7f;
  const auto w = tta::augco_reliability(v, v2, 0.8);
  CHECK(w(0, 2) == 0.0f);
  v2(0, 0, 0, 2) = 0.1f; v2(0, 1, 0, 2) = 0.9f;
  CHECK(tta::augco_reliability(v, v2, 0.8)(0, 2) == 1.0f);

  ProbMask a(1, 2, 2, 2), b(1, 2, 2, 2);
  for (int i = 0; i < 4; ++i) {
    a.data()[i] = 0.6f; a.data()[4 + i] = 0.4f;
    b.data()[i] = 0.4f; b.data()[4 + i] = 0.6f;
  }
  CHECK(tta::augco_reliability(a, b, 0.8).sum() == 0.0f);
  CHECK_THROWS(tta::augco_reliability(a, ProbMask(1, 2, 3, 2), 0.8));
}

TEST_CASE("AugCo views are seeded crops within the area range") {
  const auto s = test::heldout_shapes(1)[0];
  auto cfg = config(Method::kAugCo, LossKind::kCE, 0.01);
  cfg.seed = 9;
  const ProbMask p(1, 4, s.image.h(), s.image.w(), 0.25f);
  for (int step = 1; step <= 10; ++step) {
    const auto v = tta::make_augco_views(p, s.image, cfg, step);
    const double area = static_cast<double>(v.height * v.width) / s.image.plane_size();
    CHECK(area >= 0.25 - 0.03);
    CHECK(area <= 0.5 + 0.03);
    CHECK(v.view1.same_shape(p));
    CHECK(v.view2_input.same_shape(s.image));
    CHECK(v.view2_input.flat().minCoeff() >= 0.0f);
    CHECK(v.view2_input.flat().maxCoeff() <= 1.0f);
    const auto again = tta::make_augco_views(p, s.image, cfg, step);
    CHECK(again.view2_input == v.view2_input);
    CHECK(again.top == v.top);
  }
}

TEST_CASE("zero iterations and zero learning rate leave the NA result") {
  auto model = test::pretrained();
  const auto s = test::corrupted(test::heldout_shapes(1, 8), corruptions::CorruptionKind::kFog, 3)[0];
  const auto hash = core::parameter_hash(*model);
  const auto r0 = tta::adapt_single_image(*model, s.image, config(Method::kEnt, LossKind::kEnt, 0.1, 0), {}, s.mask);
  REQUIRE(r0.iterations.size() == 1);
  CHECK((r0.final().mask == r0.na().mask).all());
  CHECK(core::parameter_hash(*model) == hash);

  const auto rz = tta::adapt_single_image(*model, s.image, config(Method::kPL, LossKind::kIoU, 0.0, 4), {}, s.mask);
  REQUIRE(rz.iterations.size() == 5);
  for (const auto& it : rz.iterations) {
    CHECK((it.mask == r0.na().mask).all());
    CHECK(it.entropy == r0.na().entropy);
    CHECK(*it.miou_i == *r0.na().miou_i);
  }
}

TEST_CASE("every method restores the pretrained weights and records iterations + 1 entries") {
  auto model = test::pretrained();
  const auto hash = core::parameter_hash(*model);
  const auto samples = test::corrupted(test::heldout_shapes(2, 12), corruptions::CorruptionKind::kGaussianNoise, 3);
  auxnets::IdentityRefiner identity(4);
  auxnets::DeepIoUEstimator est(4, 8);
  est.net().init(1);
  const tta::AuxModels aux{&identity, &est};
  for (auto m : {Method::kEnt, Method::kPL, Method::kAugCo, Method::kAdv, Method::kRef, Method::kDIoU}) {
    for (auto scope : {core::ParamScope::kFull, core::ParamScope::kNormAffine}) {
      const auto loss = tta::valid_losses(m).front();
      for (const auto& s : samples) {
        CAPTURE(tta::to_string(m));
        const auto rec = tta::adapt_single_image(*model, s.image, config(m, loss, 0.01, 3, scope), aux, s.mask, s.id);
        CHECK(rec.iterations.size() == 4);
        CHECK_FALSE(rec.diverged);
        CHECK(rec.image_id == s.id);
        CHECK(core::parameter_hash(*model) == hash);
        for (std::size_t i = 1; i < rec.iterations.size(); ++i) CHECK(rec.iterations[i].objective.has_value());
      }
    }
  }
}

TEST_CASE("divergence aborts to the NA result and restores weights") {
  auto model = test::pretrained();
  const auto hash = core::parameter_hash(*model);
  const auto s = test::heldout_shapes(1, 13)[0];
  const auto rec = tta::adapt_single_image(*model, s.image, config(Method::kEnt, LossKind::kEnt, 1e30, 5), {}, s.mask);
  CHECK(rec.diverged);
  CHECK(rec.diverged_at >= 1);
  REQUIRE(rec.iterations.size() == 6);
  for (const auto& it : rec.iterations) {
    CHECK((it.mask == rec.na().mask).all());
    CHECK(*it.miou_i == *rec.na().miou_i);
  }
  CHECK(core::parameter_hash(*model) == hash);
}

TEST_CASE("norm-affine scope never touches other parameters") {
  auto model = test::pretrained();
  const auto frozen = non_norm_hash(*model);
  const auto full_hash = core::parameter_hash(*model);
  int observed = 0;
  bool norm_changed = false;
  test::SpyModel spy(*model, [&](core::ModelAdapter& m) {
    ++observed;
    CHECK(non_norm_hash(m) == frozen);
    norm_changed |= core::parameter_hash(m) != full_hash;
  });
  const auto s = test::corrupted(test::heldout_shapes(1, 14), corruptions::CorruptionKind::kContrast, 3)[0];
  tta::adapt_single_image(spy, s.image, config(Method::kEnt, LossKind::kEnt, 0.05, 5, core::ParamScope::kNormAffine));
  CHECK(observed > 5);
  CHECK(norm_changed);
}

TEST_CASE("a small Ent step does not increase entropy") {
  auto model = test::pretrained();
  const auto samples = test::corrupted(test::heldout_shapes(50, 40), corruptions::CorruptionKind::kGaussianNoise, 3);
  int violations = 0;
  for (const auto& s : samples) {
    const auto rec = tta::adapt_single_image(*model, s.image, config(Method::kEnt, LossKind::kEnt, 1e-4, 1));
    violations += rec.final().entropy > rec.na().entropy + 1e-6;
  }
  CHECK(violations <= 2);
}

TEST_CASE("ten Ent iterations lower entropy on a corrupted image") {
  auto model = test::pretrained();
  const auto s = test::corrupted(test::heldout_shapes(1, 41), corruptions::CorruptionKind::kGaussianNoise, 3)[0];
  const auto rec = tta::adapt_single_image(*model, s.image, config(Method::kEnt, LossKind::kEnt, 1e-2, 10));
  CHECK(rec.final().entropy < rec.na().entropy);
}

TEST_CASE("PL threshold can mask every pixel") {
  auto model = test::pretrained();
  const auto s = test::heldout_shapes(1, 15)[0];
  auto cfg = config(Method::kPL, LossKind::kCE, 0.01, 2);
  cfg.pl_threshold = 1.01;
  const auto hash = core::parameter_hash(*model);
  const auto obj = tta::compute_objective(*model, s.image, cfg, {});
  CHECK_FALSE(obj.has_gradient);
  const auto rec = tta::adapt_single_image(*model, s.image, cfg);
  CHECK((rec.final().mask == rec.na().mask).all());
  CHECK(core::parameter_hash(*model) == hash);
}

TEST_CASE("adaptation is deterministic") {
  auto model = test::pretrained();
  const auto s = test::corrupted(test::heldout_shapes(1, 16), corruptions::CorruptionKind::kShotNoise, 3)[0];
  auto cfg = config(Method::kAugCo, LossKind::kIoU, 0.01, 4);
  cfg.seed = 5;
  const auto a = tta::adapt_single_image(*model, s.image, cfg, {}, s.mask);
  const auto b = tta::adapt_single_image(*model, s.image, cfg, {}, s.mask);
  for (std::size_t i = 0; i < a.iterations.size(); ++i) {
    CHECK(a.iterations[i].entropy == b.iterations[i].entropy);
    CHECK((a.iterations[i].mask == b.iterations[i].mask).all());
  }
  CHECK(a.to_json()["iterations"].size() == 5);
}
