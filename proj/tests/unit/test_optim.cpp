#include <cmath>
#include <numbers>

#include "doctest.h"
#include "has8/errors.hpp"
#include "has8/hybrid.hpp"
#include "has8/optim.hpp"
#include "has8/verification.hpp"
#include "support.hpp"

using namespace has8;
using has8::test::Gen;

namespace {

std::vector<ParamRef<double>> refs(Tensor<double>& t, const std::string& name = "theta") {
  return {ParamRef<double>{name, &t, true}};
}

// Reference Adam with coupled L2 on plain doubles.
struct AdamOracle {
  double lr, b1, b2, eps, wd;
  std::vector<double> m, v;
  int t = 0;
  void step(std::vector<double>& theta, const std::vector<double>& grad) {
    if (m.empty()) m.assign(theta.size(), 0.0), v.assign(theta.size(), 0.0);
    ++t;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double g = grad[i] + wd * theta[i];
      m[i] = b1 * m[i] + (1 - b1) * g;
      v[i] = b2 * v[i] + (1 - b2) * g * g;
      const double mh = m[i] / (1 - std::pow(b1, t));
      const double vh = v[i] / (1 - std::pow(b2, t));
      theta[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
  }
};

}  // namespace

TEST_CASE("first Adam step moves by lr whatever the gradient scale") {
  std::vector<double> moves;
  for (const double scale : {1e-2, 1.0, 1e4}) {
    auto theta = Tensor<double>::scalar(1.0, true);
    AdamConfig cfg;
    cfg.weight_decay = 0.0;
    Adam<double> opt(refs(theta), cfg);
    backward(mul_scalar(square(theta), scale));
    opt.step();
    const double g = 2 * scale;
    moves.push_back(1.0 - theta.item());
    CHECK(moves.back() == doctest::Approx(1e-3 * g / (g + 1e-8)).epsilon(1e-12));
  }
  for (const double m : moves) CHECK(std::abs(m - moves[1]) <= 1e-6 * 1e-3);
}

TEST_CASE("zero gradient and zero decay leave parameters unchanged") {
  auto theta = Tensor<double>({3}, {0.5, -1.0, 2.0}, true);
  AdamConfig cfg;
  cfg.weight_decay = 0.0;
  Adam<double> opt(refs(theta), cfg);
  backward(sum(mul_scalar(theta, 0.0)));
  opt.step();
  CHECK(theta.at(0) == 0.5);
  CHECK(theta.at(2) == 2.0);
}

TEST_CASE("Adam with coupled L2 matches a reference over many steps") {
  Gen g(41);
  auto theta = test::random_tensor<double>(g, {6}, -1.0, 1.0, true);
  std::vector<double> ref(theta.data().begin(), theta.data().end());
  Adam<double> opt(refs(theta));
  AdamOracle oracle{1e-3, 0.9, 0.999, 1e-8, 1e-3, {}, {}, 0};
  const auto target = test::random_tensor<double>(g, {6});
  for (int step = 0; step < 50; ++step) {
    opt.zero_grad();
    const auto d = sub(theta, target);
    backward(sum(mul(d, mul(d, d))));
    std::vector<double> grad(6);
    for (std::size_t i = 0; i < 6; ++i) grad[i] = 3 * std::pow(ref[i] - target.at(i), 2);
    oracle.step(ref, grad);
    opt.step();
    for (std::size_t i = 0; i < 6; ++i) REQUIRE(theta.at(i) == doctest::Approx(ref[i]).epsilon(1e-12));
  }
  CHECK(opt.steps() == 50);
}

TEST_CASE("two accumulated half batches equal one full batch") {
  Gen g(42);
  Rng r1(3), r2(3);
  Linear<double> a(5, 3, true, r1), b(5, 3, true, r2);
  const auto x = test::random_tensor<double>(g, {8, 5});
  const std::vector<std::uint8_t> y{0, 1, 2, 0, 1, 2, 2, 1};
  std::vector<ParamRef<double>> pa, pb;
  a.collect("", pa);
  b.collect("", pb);
  Adam<double> oa(pa), ob(pb);

  backward(cross_entropy(a.forward(x), y));
  oa.step();

  const auto top = reshape(x.clone(), {2, 4, 5});
  const std::vector<std::uint8_t> y0(y.begin(), y.begin() + 4), y1(y.begin() + 4, y.end());
  backward(mul_scalar(cross_entropy(b.forward(select(top, 0)), y0), 0.5));
  backward(mul_scalar(cross_entropy(b.forward(select(top, 1)), y1), 0.5));
  ob.step();

  for (std::size_t i = 0; i < a.weight.numel(); ++i) {
    CHECK(a.weight.at(i) == doctest::Approx(b.weight.at(i)).epsilon(1e-12));
  }
  for (std::size_t i = 0; i < 3; ++i) CHECK(a.bias->at(i) == doctest::Approx(b.bias->at(i)).epsilon(1e-12));
}

TEST_CASE("non-finite gradients are rejected by name before any update") {
  auto good = Tensor<double>({2}, {1.0, 2.0}, true);
  auto bad = Tensor<double>({2}, {1.0, 2.0}, true);
  std::vector<ParamRef<double>> params{{"layer.good", &good, true}, {"layer.bad", &bad, true}};
  Adam<double> opt(params);
  backward(sum(add(good, div(bad, Tensor<double>({2}, {0.0, 1.0})))));
  try {
    opt.step();
    FAIL("expected NonFiniteError");
  } catch (const NonFiniteError& e) {
    CHECK(std::string(e.what()).find("layer.bad") != std::string::npos);
  }
  CHECK(good.at(0) == 1.0);
  CHECK(opt.steps() == 0);
}

TEST_CASE("optimizer configs are validated") {
  AdamConfig a;
  a.lr = 0.0;
  CHECK_THROWS_AS(a.validate(), ValueError);
  a = {};
  a.beta2 = 1.0;
  CHECK_THROWS_AS(a.validate(), ValueError);
  SgdConfig s;
  s.momentum = 1.5;
  CHECK_THROWS_AS(s.validate(), ValueError);
}

TEST_CASE("Nesterov SGD matches a hand recursion") {
  auto theta = Tensor<double>({1}, {1.0}, true);
  SgdConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.0;
  Sgd<double> opt(refs(theta), cfg);
  double ref = 1.0, buf = 0.0;
  for (int step = 0; step < 5; ++step) {
    opt.zero_grad();
    backward(sum(square(theta)));
    const double g = 2 * ref;
    buf = step == 0 ? g : 0.9 * buf + g;
    ref -= 0.1 * (g + 0.9 * buf);
    opt.step();
    CHECK(theta.at(0) == doctest::Approx(ref).epsilon(1e-14));
  }
}

TEST_CASE("cross entropy values and gradient") {
  const auto uniform = Tensor<double>::zeros({4, 10});
  CHECK(cross_entropy(uniform, {0, 3, 9, 5}).item() == doctest::Approx(std::log(10.0)).epsilon(1e-14));
  std::vector<double> v(10, 0.0);
  v[7] = 20.0;
  CHECK(cross_entropy(Tensor<double>({1, 10}, v), {7}).item() < 1e-7);
  CHECK_THROWS_AS(cross_entropy(uniform, {0, 3, 10, 5}), ValueError);
  CHECK_THROWS_AS(cross_entropy(uniform, {0}), ShapeError);

  Gen g(43);
  auto z = test::random_tensor<double>(g, {3, 4}, -2.0, 2.0, true);
  backward(cross_entropy(z, {1, 0, 3}));
  const std::uint8_t labels[3] = {1, 0, 3};
  for (std::size_t i = 0; i < 3; ++i) {
    double denom = 0;
    for (std::size_t j = 0; j < 4; ++j) denom += std::exp(z.at(i * 4 + j));
    for (std::size_t j = 0; j < 4; ++j) {
      const double p = std::exp(z.at(i * 4 + j)) / denom;
      CHECK(z.grad_data()[i * 4 + j] == doctest::Approx((p - (j == labels[i])) / 3.0).epsilon(1e-12));
    }
  }
  const auto report = gradcheck(
      "cross_entropy", [](const std::vector<Tensor<double>>& in) { return cross_entropy(in[0], {2, 1, 0}); },
      {test::random_tensor<double>(g, {3, 4})}, 7);
  CHECK_MESSAGE(report.pass, report.detail);
}

TEST_CASE("SGDR schedule") {
  const SgdrConfig cfg{0.1, 100};
  CHECK(sgdr_lr(0, cfg) == 0.1);
  CHECK(sgdr_lr(50, cfg) == doctest::Approx(0.05).epsilon(1e-14));
  CHECK(sgdr_lr(99, cfg) < 1e-4);
  CHECK(sgdr_lr(100, cfg) == doctest::Approx(0.01).epsilon(1e-14));
  CHECK(sgdr_lr(250, cfg) == doctest::Approx(0.005).epsilon(1e-14));
  for (std::size_t s = 1; s < 100; ++s) CHECK(sgdr_lr(s, cfg) < sgdr_lr(s - 1, cfg));
  CHECK(sgdr_initial_lr(256) == doctest::Approx(0.1));
  CHECK(sgdr_initial_lr(64) == doctest::Approx(0.025));
  CHECK_THROWS_AS(sgdr_lr(0, SgdrConfig{0.1, 0}), ValueError);
}

TEST_CASE("loss on a fixed batch strictly decreases for 20 Adam steps") {
  for (const auto kind : {SurrogateKind::kSigSine, SurrogateKind::kTanhSine, SurrogateKind::kFourierSine}) {
    CAPTURE(surrogate_name(kind));
    ModelSpec spec;
    spec.b = 4;
    spec.d_max = 1;
    spec.input_size = 8;
    spec.surrogate.kind = kind;
    HybridModel<double> model(spec, 9);
    Adam<double> opt(model.trainable_parameters());
    Gen g(44);
    const auto x = test::random_tensor<double>(g, {8, 3, 8, 8}, 0.0, 1.0);
    const std::vector<std::uint8_t> y{0, 1, 2, 3, 4, 5, 6, 7};
    double previous = INFINITY;
    for (int step = 0; step < 20; ++step) {
      opt.zero_grad();
      const auto loss = cross_entropy(model.forward(x), y);
      CHECK(loss.item() < previous);
      previous = loss.item();
      backward(loss);
      opt.step();
    }
  }
}
