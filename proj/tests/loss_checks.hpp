#ifndef SITTA_TESTS_LOSS_CHECKS_HPP_
#define SITTA_TESTS_LOSS_CHECKS_HPP_

#include <cmath>
#include <functional>
#include <random>

#include "sitta/losses.hpp"

namespace sitta::test {

/// ||analytic - numeric|| / max(||analytic||, ||numeric||) with central
/// differences of step h on every entry of p.
inline double gradient_rel_error(const std::function<losses::LossValue<double>(const TensorD&)>& f,
                                 const TensorD& p, double h = 1e-4) {
  const TensorD g = f(p).grad;
  double diff = 0, na = 0, nn = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    TensorD a = p, b = p;
    a.data()[i] += h;
    b.data()[i] -= h;
    const double num = (f(a).value - f(b).value) / (2 * h);
    diff += std::pow(g.data()[i] - num, 2);
    na += g.data()[i] * g.data()[i];
    nn += num * num;
  }
  const double scale = std::sqrt(std::max(na, nn));
  return scale == 0 ? 0.0 : std::sqrt(diff) / scale;
}

/// Random 1xCxHxW probability mask bounded away from the log floor and
/// from argmax ties.
inline TensorD random_probs(int c, int h, int w, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  TensorD z(1, c, h, w);
  for (auto& v : z.storage()) v = u(rng);
  return softmax(z);
}

}  // namespace sitta::test

#endif  // SITTA_TESTS_LOSS_CHECKS_HPP_
