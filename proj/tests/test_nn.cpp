#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "sitta/nn/optim.hpp"
#include "sitta/toy_segmenter.hpp"

using namespace sitta;

namespace {

// Scalar objective sum(w * logits) for a random projection w.
double objective(ToySegmenter<double>& net, const TensorD& x, const TensorD& w) {
  return (net.forward(x).flat() * w.flat()).sum();
}

}  // namespace

TEST_CASE("toy segmenter backward matches finite differences in double precision") {
  for (bool training : {false, true}) {
    CAPTURE(training);
    ToySegmenter<double> net(3, 4, true);
    net.init(11);
    net.set_training(training);
    std::mt19937_64 rng(13);
    const TensorD x = test::random_tensor(1, 3, 8, 8, rng, 0.0f, 1.0f).cast<double>();
    const TensorD out = net.forward(x);
    TensorD w = TensorD::like(out);
    for (auto& v : w.storage()) v = std::uniform_real_distribution<double>(-1, 1)(rng);

    for (auto* p : net.parameters()) p->grad.setZero();
    net.forward(x);
    const TensorD dx = net.backward(w);

    auto params = net.parameters();
    std::uniform_int_distribution<int> pick_param(0, static_cast<int>(params.size()) - 1);
    for (int trial = 0; trial < 30; ++trial) {
      auto* p = params[pick_param(rng)];
      const auto i = std::uniform_int_distribution<Eigen::Index>(0, p->size() - 1)(rng);
      const double saved = p->value[i];
      p->value[i] = saved + 1e-5;
      const double up = objective(net, x, w);
      p->value[i] = saved - 1e-5;
      const double down = objective(net, x, w);
      p->value[i] = saved;
      const double fd = (up - down) / 2e-5;
      CAPTURE(p->name);
      CHECK(p->grad[i] == doctest::Approx(fd).epsilon(1e-5).scale(1.0));
    }
    for (int trial = 0; trial < 10; ++trial) {
      const auto i = std::uniform_int_distribution<std::size_t>(0, x.size() - 1)(rng);
      TensorD a = x, b = x;
      a.data()[i] += 1e-5;
      b.data()[i] -= 1e-5;
      const double fd = (objective(net, a, w) - objective(net, b, w)) / 2e-5;
      CHECK(dx.data()[i] == doctest::Approx(fd).epsilon(1e-5).scale(1.0));
    }
  }
}

TEST_CASE("evaluation mode leaves running statistics untouched") {
  ToySegmenter<float> net(4, 4, true);
  net.init(2);
  std::mt19937_64 rng(1);
  const TensorF x = test::random_tensor(2, 3, 8, 8, rng, 0.0f, 1.0f);
  std::vector<ArrayX<float>> before;
  for (auto* b : net.buffers()) before.push_back(b->value);
  net.forward(x);
  auto buffers = net.buffers();
  for (std::size_t i = 0; i < buffers.size(); ++i) CHECK((buffers[i]->value == before[i]).all());
  net.set_training(true);
  net.forward(x);
  bool changed = false;
  for (std::size_t i = 0; i < buffers.size(); ++i) changed |= !(buffers[i]->value == before[i]).all();
  CHECK(changed);
}
