#include <doctest.h>

#include <filesystem>

#include "helpers.hpp"
#include "sitta/attacks.hpp"
#include "sitta/ops.hpp"

using namespace sitta;

namespace {

double agreement(const LabelMask& a, const LabelMask& b) {
  return (a == b).cast<double>().mean();
}

}  // namespace

TEST_CASE("inverted target") {
  ProbMask two(1, 2, 1, 1);
  two(0, 0, 0, 0) = 0.8f;
  two(0, 1, 0, 0) = 0.2f;
  const auto t2 = attacks::inverted_target(two);
  CHECK(t2(0, 0, 0, 0) == 0.0f);
  CHECK(t2(0, 1, 0, 0) == 1.0f);

  const ProbMask uniform(1, 3, 1, 1, 1.0f / 3);
  const auto t3 = attacks::inverted_target(uniform);
  CHECK(t3(0, 0, 0, 0) == 0.0f);
  CHECK(t3(0, 1, 0, 0) == 0.5f);
  CHECK(t3(0, 2, 0, 0) == 0.5f);

  CHECK_THROWS(attacks::inverted_target(ProbMask(1, 1, 2, 2, 1.0f)));
}

TEST_CASE("degenerate attack settings are the identity") {
  auto model = test::pretrained();
  const auto s = test::heldout_shapes(1).front();
  const auto target = attacks::inverted_target(softmax(model->forward(s.image)));
  CHECK(attacks::fgsm_step(*model, s.image, target, 0.0) == s.image);
  attacks::AttackConfig cfg;
  cfg.steps = 0;
  CHECK(attacks::pgd_attack(*model, s.image, target, cfg).empty());
}

TEST_CASE("PGD stays in range, leaves weights alone and is deterministic") {
  auto model = test::pretrained();
  const auto hash = core::parameter_hash(*model);
  const auto s = test::heldout_shapes(1, 7).front();
  const auto target = attacks::inverted_target(softmax(model->forward(s.image)));
  attacks::AttackConfig cfg;
  const auto a = attacks::pgd_attack(*model, s.image, target, cfg);
  REQUIRE(a.size() == 10);
  for (std::size_t t = 0; t < a.size(); ++t) {
    CHECK(a[t].t == static_cast<int>(t) + 1);
    CHECK(a[t].image.flat().minCoeff() >= 0.0f);
    CHECK(a[t].image.flat().maxCoeff() <= 1.0f);
  }
  CHECK(core::parameter_hash(*model) == hash);
  const auto b = attacks::pgd_attack(*model, s.image, target, cfg);
  for (std::size_t t = 0; t < a.size(); ++t) CHECK(a[t].image == b[t].image);
}

TEST_CASE("PGD respects an L-infinity budget") {
  auto model = test::pretrained();
  const auto s = test::heldout_shapes(1, 9).front();
  const auto target = attacks::inverted_target(softmax(model->forward(s.image)));
  attacks::AttackConfig cfg;
  cfg.steps = 6;
  cfg.step = 2.0 / 255.0;
  cfg.budget = 3.0 / 255.0;
  for (const auto& st : attacks::pgd_attack(*model, s.image, target, cfg)) {
    CHECK((st.image.flat() - s.image.flat()).abs().maxCoeff() <= 3.0f / 255.0f + 1e-6f);
  }
}

TEST_CASE("the targeted loss decreases along the trajectory") {
  auto model = test::pretrained();
  const auto s = test::heldout_shapes(1, 11).front();
  const auto target = attacks::inverted_target(softmax(model->forward(s.image)));
  const double before = attacks::targeted_ce_gradient(*model, s.image, target).loss;
  attacks::AttackConfig cfg;
  const auto traj = attacks::pgd_attack(*model, s.image, target, cfg);
  const double after = attacks::targeted_ce_gradient(*model, traj.back().image, target).loss;
  CHECK(after < before);
}

TEST_CASE("agreement with the clean mask mostly decreases") {
  auto model = test::pretrained();
  int violations = 0, comparisons = 0;
  for (const auto& s : test::heldout_shapes(5, 21)) {
    const LogitMask clean = model->forward(s.image);
    const LabelMask clean_mask = argmax(clean);
    const auto traj = attacks::pgd_attack(*model, s.image, attacks::inverted_target(softmax(clean)), {});
    double prev = 1.0;
    for (const auto& st : traj) {
      const double a = agreement(argmax(st.logits), clean_mask);
      violations += a > prev;
      ++comparisons;
      prev = a;
    }
  }
  CHECK(violations <= 0.05 * comparisons);
}

TEST_CASE("trajectory dump writes the array and its sidecar") {
  auto model = test::pretrained();
  const auto s = test::heldout_shapes(1).front();
  attacks::AttackConfig cfg;
  cfg.steps = 2;
  const auto traj = attacks::pgd_attack(*model, s.image,
                                        attacks::inverted_target(softmax(model->forward(s.image))), cfg);
  const auto dir = test::scratch("attack_dump");
  attacks::dump_trajectory_step(dir.string(), s.id, traj[1], cfg);
  int files = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    (void)e;
    ++files;
  }
  CHECK(files == 2);
}
