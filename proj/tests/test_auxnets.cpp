#include <doctest.h>

#include <random>
#include <set>

#include "helpers.hpp"
#include "sitta/auxnets.hpp"
#include "sitta/ops.hpp"

using namespace sitta;
using auxnets::TargetKind;

namespace {

// Shared 10-image pair corpus with clean (t = 0) pairs included.
struct Corpus {
  std::vector<auxnets::RefinerPair> pairs;
  std::uint64_t segmenter_hash_before = 0;
  std::uint64_t segmenter_hash_after = 0;
};

const Corpus& corpus() {
  static const Corpus c = [] {
    Corpus out;
    auto model = test::pretrained();
    out.segmenter_hash_before = core::parameter_hash(*model);
    attacks::AttackConfig attack;
    attack.step = 4.0 / 255.0;
    out.pairs = auxnets::gen_refiner_pairs(*model, test::heldout_shapes(10, 300), attack,
                                           {0, 2, 4, 6, 8, 10}, TargetKind::kPredictions);
    out.segmenter_hash_after = core::parameter_hash(*model);
    return out;
  }();
  return c;
}

auxnets::AuxTrainOptions train_options() {
  auxnets::AuxTrainOptions opt;
  opt.epochs = 20;
  opt.width = 8;
  opt.seed = 5;
  return opt;
}

const auxnets::TrainedRefiner& trained_refiner() {
  static const auto r = auxnets::train_refiner(corpus().pairs, train_options());
  return r;
}

// Pairs whose mask is the target itself: logits of a confident one-hot mask.
std::vector<auxnets::RefinerPair> exact_pairs() {
  std::vector<auxnets::RefinerPair> out;
  for (const auto& p : corpus().pairs) {
    if (p.t != 0) continue;
    auxnets::RefinerPair exact = p;
    exact.corrupted = one_hot<float>(p.target, p.corrupted.c());
    exact.corrupted.flat() = 8.0f * exact.corrupted.flat() - 4.0f;
    out.push_back(std::move(exact));
  }
  return out;
}

const auxnets::TrainedEstimator& trained_estimator() {
  static const auto e = [] {
    auto pairs = corpus().pairs;
    for (auto& p : exact_pairs()) pairs.push_back(std::move(p));
    auto opt = train_options();
    opt.width = 16;
    opt.lr = 3e-3;
    return auxnets::train_diou(auxnets::make_iou_pairs(pairs), opt);
  }();
  return e;
}

}  // namespace

TEST_CASE("pair generation counts and degenerate pairs") {
  auto model = test::pretrained();
  const auto images = test::heldout_shapes(10, 300);
  attacks::AttackConfig attack;
  const auto pairs = auxnets::gen_refiner_pairs(*model, images, attack, {2, 4, 6, 8, 10},
                                                TargetKind::kPredictions);
  CHECK(pairs.size() == 50);

  attack.steps = 0;
  const auto clean = auxnets::gen_refiner_pairs(*model, {images[0]}, attack, {0},
                                                TargetKind::kPredictions);
  REQUIRE(clean.size() == 1);
  CHECK((argmax(clean[0].corrupted) == clean[0].target).all());

  auto unlabeled = images[0];
  unlabeled.mask.reset();
  CHECK_THROWS(auxnets::gen_refiner_pairs(*model, {unlabeled}, attack, {0}, TargetKind::kGroundTruth));
  CHECK(corpus().segmenter_hash_before == corpus().segmenter_hash_after);
}

TEST_CASE("pair corpora are reproducible") {
  auto model = test::pretrained();
  const auto images = test::heldout_shapes(2, 300);
  const auto a = auxnets::gen_refiner_pairs(*model, images, {}, {2, 10}, TargetKind::kGroundTruth);
  const auto b = auxnets::gen_refiner_pairs(*model, images, {}, {2, 10}, TargetKind::kGroundTruth);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].corrupted == b[i].corrupted);
    CHECK((a[i].target == *images[i / 2].mask).all());
  }
}

TEST_CASE("split by source never leaks an image across the split") {
  std::vector<std::string> ids;
  for (int i = 0; i < 20; ++i)
    for (int t = 0; t < 5; ++t) ids.push_back("img" + std::to_string(i));
  const auto [train, val] = auxnets::split_by_source(ids, 0.1, 3);
  CHECK(train.size() + val.size() == ids.size());
  CHECK(val.size() == 10);
  std::set<std::string> train_ids, val_ids;
  for (auto i : train) train_ids.insert(ids[i]);
  for (auto i : val) val_ids.insert(ids[i]);
  for (const auto& v : val_ids) CHECK(train_ids.count(v) == 0);
}

TEST_CASE("refiner output shape contract and normalization") {
  auxnets::UNetRefiner refiner(4, 8);
  refiner.net().init(1);
  std::mt19937_64 rng(2);
  for (auto [h, w] : {std::pair{16, 16}, std::pair{13, 17}, std::pair{7, 30}}) {
    const LogitMask x = test::random_tensor(1, 4, h, w, rng, -3.0f, 3.0f);
    const ProbMask p = auxnets::refine(refiner, x);
    CHECK(p.same_shape(x));
    for (int i = 0; i < p.plane_size(); ++i)
      CHECK(p.sample(0).col(i).sum() == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(auxnets::refine(refiner, x) == p);
  }
  CHECK_THROWS(auxnets::refine(refiner, test::random_tensor(1, 3, 8, 8, rng)));
}

TEST_CASE("refiner parameter gradients match finite differences") {
  auxnets::UNetRefinerNet<double> net(3, 4);
  net.init(3);
  std::mt19937_64 rng(4);
  const TensorD x = test::random_tensor(1, 3, 8, 8, rng, -2.0f, 2.0f).cast<double>();
  const TensorD out = net.forward(x);
  TensorD w = TensorD::like(out);
  for (auto& v : w.storage()) v = std::uniform_real_distribution<double>(-1, 1)(rng);
  for (auto* p : net.parameters()) p->grad.setZero();
  net.forward(x);
  net.backward(w);
  auto f = [&] { return (net.forward(x).flat() * w.flat()).sum(); };
  auto params = net.parameters();
  for (int trial = 0; trial < 25; ++trial) {
    auto* p = params[std::uniform_int_distribution<std::size_t>(0, params.size() - 1)(rng)];
    const auto i = std::uniform_int_distribution<Eigen::Index>(0, p->size() - 1)(rng);
    const double saved = p->value[i];
    p->value[i] = saved + 1e-5;
    const double up = f();
    p->value[i] = saved - 1e-5;
    const double down = f();
    p->value[i] = saved;
    CAPTURE(p->name);
    CHECK(p->grad[i] == doctest::Approx((up - down) / 2e-5).epsilon(1e-5).scale(1.0));
  }
}

TEST_CASE("estimator is bounded and its input gradient matches finite differences") {
  auxnets::IoUEstimatorNet<double> net(3, 4);
  net.init(5);
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 5; ++trial) {
    const TensorD x = test::random_tensor(1, 3, 16, 16, rng, -4.0f, 4.0f).cast<double>();
    const double y = net.forward(x).data()[0];
    CHECK(y > 0.0);
    CHECK(y < 1.0);
    const TensorD g = net.backward(TensorD(1, 1, 1, 1, 1.0), false);
    for (int k = 0; k < 10; ++k) {
      const auto i = std::uniform_int_distribution<std::size_t>(0, x.size() - 1)(rng);
      TensorD a = x, b = x;
      a.data()[i] += 1e-5;
      b.data()[i] -= 1e-5;
      const double fd = (net.forward(a).data()[0] - net.forward(b).data()[0]) / 2e-5;
      CHECK(g.data()[i] == doctest::Approx(fd).epsilon(1e-5).scale(1.0));
    }
  }
}

TEST_CASE("refiner training halves the CE and stays close to identity on clean masks") {
  const auto& r = trained_refiner();
  REQUIRE(r.curve.train_loss.size() == 20);
  CHECK(r.curve.train_loss.back() <= 0.5 * r.curve.train_loss.front());
  double agree = 0;
  int n = 0;
  for (const auto& p : corpus().pairs) {
    if (p.t != 0) continue;
    agree += (argmax(auxnets::refine(*r.refiner, p.corrupted)) == argmax(p.corrupted)).cast<double>().mean();
    ++n;
  }
  CHECK(agree / n >= 0.95);
}

TEST_CASE("estimator training halves the MSE and scores exact masks near zero") {
  const auto& e = trained_estimator();
  REQUIRE(e.curve.train_loss.size() == 20);
  CHECK(e.curve.train_loss.back() <= 0.5 * e.curve.train_loss.front());
  for (const auto& p : corpus().pairs) {
    const double y = auxnets::predict_iou_loss(*e.estimator, p.corrupted);
    CHECK(y >= 0.0);
    CHECK(y <= 1.0);
  }
  const auto exact = exact_pairs();
  for (const auto& ip : auxnets::make_iou_pairs(exact)) {
    CHECK(ip.label < 0.01);
    CHECK(auxnets::predict_iou_loss(*e.estimator, ip.mask) < 0.15);
  }
}

TEST_CASE("estimator labels are validated") {
  auto pairs = auxnets::make_iou_pairs({corpus().pairs.front()});
  for (const auto& p : auxnets::make_iou_pairs(corpus().pairs)) {
    CHECK(p.label >= 0.0);
    CHECK(p.label <= 1.0);
  }
  pairs[0].label = 1.5;
  CHECK_THROWS(auxnets::train_diou(pairs, train_options()));
}

TEST_CASE("auxiliary checkpoints round-trip") {
  const auto dir = test::scratch("aux_ckpt");
  const auto& r = trained_refiner();
  r.refiner->save((dir / "r.ckpt").string());
  auto r2 = auxnets::UNetRefiner::load((dir / "r.ckpt").string());
  const auto& x = corpus().pairs[3].corrupted;
  CHECK(auxnets::refine(*r2, x) == auxnets::refine(*r.refiner, x));

  const auto& e = trained_estimator();
  e.estimator->save((dir / "e.ckpt").string());
  auto e2 = auxnets::DeepIoUEstimator::load((dir / "e.ckpt").string());
  CHECK(e2->predict(x) == e.estimator->predict(x));
  CHECK_THROWS(auxnets::UNetRefiner::load((dir / "e.ckpt").string()));
}

TEST_CASE("training rejects shape-inconsistent corpora") {
  auto pairs = std::vector<auxnets::RefinerPair>{corpus().pairs[0], corpus().pairs[1]};
  pairs[1].target = LabelMask::Zero(5, 5);
  CHECK_THROWS(auxnets::train_refiner(pairs, train_options()));
  CHECK_THROWS(auxnets::train_refiner({}, train_options()));
}
