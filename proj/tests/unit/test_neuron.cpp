#include <cmath>
#include <numbers>

#include "doctest.h"
#include "has8/errors.hpp"
#include "has8/layers.hpp"
#include "has8/neuron.hpp"
#include "has8/ops.hpp"
#include "support.hpp"

using namespace has8;
using has8::test::Gen;

namespace {

// Hard-reset IF simulated by hand on plain doubles.
std::vector<double> simulate(const std::vector<double>& currents, double th) {
  std::vector<double> spikes;
  double u = 0, s = 0;
  for (const double c : currents) {
    u = (1 - s) * u + c;
    s = u >= th ? 1.0 : 0.0;
    spikes.push_back(s);
  }
  return spikes;
}

}  // namespace

TEST_CASE("constant current 0.6 fires on every second step") {
  const auto currents = Tensor<double>::full({8, 1}, 0.6);
  const auto spikes = if_over_time(currents, IFConfig{}).tensor();
  const std::vector<double> expect{0, 1, 0, 1, 0, 1, 0, 1};
  for (std::size_t t = 0; t < 8; ++t) CHECK(spikes.at(t) == expect[t]);
  const auto stepwise = if_over_time_stepwise(currents, IFConfig{}).tensor();
  for (std::size_t t = 0; t < 8; ++t) CHECK(stepwise.at(t) == expect[t]);
}

TEST_CASE("arctan surrogate") {
  CHECK(if_surrogate(0.0, 2.0) == 1.0);
  const double x = 0.3, a = 2.0;
  const double z = std::numbers::pi / 2 * a * x;
  CHECK(if_surrogate(x, a) == doctest::Approx(a / (2 * (1 + z * z))).epsilon(1e-15));
  CHECK(if_surrogate(-x, a) == if_surrogate(x, a));
}

TEST_CASE("firing matches a hand simulation for random currents") {
  Gen g(4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> c(8);
    for (auto& v : c) v = test::uniform(g, -0.5, 1.5);
    const double th = test::uniform(g, 0.2, 1.5);
    IFConfig cfg;
    cfg.v_threshold = th;
    const auto spikes = if_over_time(Tensor<double>({8, 1}, c), cfg).tensor();
    const auto expect = simulate(c, th);
    for (std::size_t t = 0; t < 8; ++t) CHECK(spikes.at(t) == expect[t]);
  }
}

TEST_CASE("if_step advances state and reset returns to rest") {
  IFState<double> state;
  CHECK_FALSE(state.started());
  const auto c = Tensor<double>::full({3}, 0.6);
  CHECK(if_step(state, c, IFConfig{}).at(0) == 0.0);
  CHECK(state.u.at(0) == doctest::Approx(0.6));
  CHECK(if_step(state, c, IFConfig{}).at(0) == 1.0);
  CHECK(state.u.at(0) == doctest::Approx(1.2));
  CHECK(if_step(state, c, IFConfig{}).at(0) == 0.0);
  CHECK(state.u.at(0) == doctest::Approx(0.6));
  reset(state);
  CHECK(state.u.at(0) == 0.0);
  CHECK(state.s_prev.at(0) == 0.0);
  CHECK_THROWS_AS(if_step(state, Tensor<double>::zeros({4}), IFConfig{}), ShapeError);
}

TEST_CASE("fused and stepwise BPTT give the same gradients") {
  Gen g(5);
  for (int trial = 0; trial < 30; ++trial) {
    const Shape s{8, test::uniform_size(g, 1, 4), test::uniform_size(g, 1, 5)};
    const auto c0 = test::random_tensor<double>(g, s, -0.2, 1.2);
    const auto w = test::random_tensor<double>(g, s);
    auto c1 = c0.clone().set_requires_grad(true);
    auto c2 = c0.clone().set_requires_grad(true);
    const auto s1 = if_over_time(c1, IFConfig{}).tensor();
    const auto s2 = if_over_time_stepwise(c2, IFConfig{}).tensor();
    for (std::size_t i = 0; i < s1.numel(); ++i) CHECK(s1.at(i) == s2.at(i));
    backward(sum(mul(s1, w)));
    backward(sum(mul(s2, w)));
    for (std::size_t i = 0; i < c0.numel(); ++i) {
      CHECK(c1.grad_data()[i] == doctest::Approx(c2.grad_data()[i]).epsilon(1e-13).scale(1.0));
    }
  }
}

TEST_CASE("gradient flows through the reset path") {
  // Two steps. dL/dc0 for L = s1 picks up the (1 - s0) u0 term.
  auto c = Tensor<double>({8, 1}, {0.9, 0.5, 0, 0, 0, 0, 0, 0}, true);
  const auto s = if_over_time(c, IFConfig{}).tensor();
  CHECK(s.at(0) == 0.0);
  CHECK(s.at(1) == 1.0);
  std::vector<double> w(8, 0.0);
  w[1] = 1.0;
  backward(sum(mul(s, Tensor<double>({8, 1}, w))));
  const double u0 = 0.9, u1 = 1.4;
  const double h0 = if_surrogate(u0 - 1.0, 2.0), h1 = if_surrogate(u1 - 1.0, 2.0);
  // du1/dc0 = (1 - s0) - u0 * ds0/du0
  CHECK(c.grad_data()[0] == doctest::Approx(h1 * ((1.0 - 0.0) - u0 * h0)).epsilon(1e-14));
  CHECK(c.grad_data()[1] == doctest::Approx(h1).epsilon(1e-14));
}

TEST_CASE("time extent and config are validated") {
  CHECK_THROWS_AS(if_over_time(Tensor<double>::zeros({7, 2}), IFConfig{}), ShapeError);
  CHECK_THROWS_AS(if_over_time_stepwise(Tensor<double>::zeros({9, 2}), IFConfig{}), ShapeError);
  IFConfig bad;
  bad.v_threshold = 0.0;
  CHECK_THROWS_AS(bad.validate(), ValueError);
  bad = {};
  bad.surrogate_alpha = -1.0;
  CHECK_THROWS_AS(if_over_time(Tensor<double>::zeros({8, 2}), bad), ValueError);
}

TEST_CASE("IF layer is stateful and refuses per-timestep folding") {
  IFNeuron<double> neuron;
  CHECK(neuron.stateful());
  CHECK_THROWS_AS(apply_per_timestep(neuron, Tensor<double>::zeros({8, 2})), std::invalid_argument);
  const auto out = neuron.forward(Tensor<double>::full({8, 2}, 0.6));
  CHECK(out.at(2) == 1.0);
  // A second call starts from rest again.
  const auto again = neuron.forward(Tensor<double>::full({8, 2}, 0.6));
  CHECK(again.at(0) == 0.0);
}
