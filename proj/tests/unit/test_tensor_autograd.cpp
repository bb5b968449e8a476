#include <cmath>
#include <numeric>

#include "doctest.h"
#include "has8/autograd.hpp"
#include "has8/errors.hpp"
#include "has8/ops.hpp"
#include "has8/verification.hpp"
#include "support.hpp"

using namespace has8;
using has8::test::Gen;

namespace {

// Index of `out_index` (in the broadcast shape `out`) inside an operand of
// shape `in`, trailing-aligned.
std::size_t broadcast_source(const Shape& out, const Shape& in, std::size_t out_index) {
  std::size_t src = 0, stride = 1;
  for (std::size_t i = 0; i < in.size(); ++i) {
    const std::size_t axis_out = out.size() - 1 - i;
    const std::size_t axis_in = in.size() - 1 - i;
    std::size_t rem = out_index;
    for (std::size_t a = out.size() - 1; a > axis_out; --a) rem /= out[a];
    const std::size_t coord = rem % out[axis_out];
    src += (in[axis_in] == 1 ? 0 : coord) * stride;
    stride *= in[axis_in];
  }
  return src;
}

// Two shapes that broadcast: b is a suffix of a with some extents set to 1.
std::pair<Shape, Shape> broadcast_pair(Gen& g) {
  Shape a = test::random_shape(g, 4, 4);
  const std::size_t keep = test::uniform_size(g, 1, a.size());
  Shape b(a.end() - static_cast<std::ptrdiff_t>(keep), a.end());
  for (auto& d : b) {
    if (test::uniform_size(g, 0, 2) == 0) d = 1;
  }
  if (test::uniform_size(g, 0, 1)) std::swap(a, b);
  return {a, b};
}

}  // namespace

TEST_CASE("shape helpers") {
  CHECK(numel({}) == 1);
  CHECK(numel({2, 3, 4}) == 24);
  CHECK(to_string({2, 3}) == "[2, 3]");
  CHECK(broadcast_shapes({4, 1, 3}, {5, 1}) == Shape{4, 5, 3});
  CHECK_THROWS_AS(broadcast_shapes({2, 3}, {4, 3}), ShapeError);
}

TEST_CASE("construction validates sizes") {
  CHECK_THROWS_AS(Tensor<double>({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
  CHECK_THROWS_AS(Tensor<double>::zeros({2}).item(), ShapeError);
  CHECK(Tensor<double>::scalar(3.5).item() == 3.5);
  const auto t = Tensor<float>::full({2, 3}, 1.5f);
  CHECK(t.numel() == 6);
  CHECK(t.at(5) == 1.5f);
}

TEST_CASE("copies alias, clone and detach do not carry history") {
  auto x = Tensor<double>({2}, {1.0, 2.0}, true);
  auto y = mul_scalar(x, 3.0);
  Tensor<double> alias = y;
  CHECK(alias.impl() == y.impl());
  const auto d = y.detach();
  CHECK(d.is_leaf());
  CHECK_FALSE(d.requires_grad());
  auto c = y.clone();
  c.mutable_data()[0] = 100.0;
  CHECK(y.at(0) == 3.0);
  CHECK_THROWS_AS(y.set_requires_grad(false), AutogradError);
}

TEST_CASE("elementwise broadcasting matches an index-mapping oracle") {
  Gen g(11);
  for (int trial = 0; trial < 200; ++trial) {
    const auto [sa, sb] = broadcast_pair(g);
    const auto a = test::random_tensor<double>(g, sa);
    const auto b = test::random_tensor<double>(g, sb, 0.5, 2.0);
    const Shape out = broadcast_shapes(sa, sb);
    const auto s = add(a, b), d = sub(a, b), m = mul(a, b), q = div(a, b);
    REQUIRE(s.shape() == out);
    for (std::size_t i = 0; i < numel(out); ++i) {
      const double va = a.at(broadcast_source(out, sa, i));
      const double vb = b.at(broadcast_source(out, sb, i));
      CHECK(s.at(i) == va + vb);
      CHECK(d.at(i) == va - vb);
      CHECK(m.at(i) == va * vb);
      CHECK(q.at(i) == va / vb);
    }
  }
}

TEST_CASE("broadcast gradients sum over expanded axes") {
  Gen g(12);
  for (int trial = 0; trial < 100; ++trial) {
    const auto [sa, sb] = broadcast_pair(g);
    auto a = test::random_tensor<double>(g, sa, -1.0, 1.0, true);
    auto b = test::random_tensor<double>(g, sb, -1.0, 1.0, true);
    backward(sum(mul(a, b)));
    const Shape out = broadcast_shapes(sa, sb);
    std::vector<double> ga(a.numel(), 0.0), gb(b.numel(), 0.0);
    for (std::size_t i = 0; i < numel(out); ++i) {
      const std::size_t ia = broadcast_source(out, sa, i), ib = broadcast_source(out, sb, i);
      ga[ia] += b.at(ib);
      gb[ib] += a.at(ia);
    }
    for (std::size_t i = 0; i < ga.size(); ++i) CHECK(a.grad_data()[i] == doctest::Approx(ga[i]).epsilon(1e-12));
    for (std::size_t i = 0; i < gb.size(); ++i) CHECK(b.grad_data()[i] == doctest::Approx(gb[i]).epsilon(1e-12));
  }
}

TEST_CASE("property: add and mul commute, sub is add of neg") {
  Gen g(13);
  for (int trial = 0; trial < 100; ++trial) {
    const auto [sa, sb] = broadcast_pair(g);
    const auto a = test::random_tensor<double>(g, sa);
    const auto b = test::random_tensor<double>(g, sb);
    const auto ab = add(a, b), ba = add(b, a), mab = mul(a, b), mba = mul(b, a);
    const auto s1 = sub(a, b), s2 = add(a, neg(b));
    for (std::size_t i = 0; i < ab.numel(); ++i) {
      CHECK(ab.at(i) == ba.at(i));
      CHECK(mab.at(i) == mba.at(i));
      CHECK(s1.at(i) == s2.at(i));
    }
  }
}

TEST_CASE("leaf gradients accumulate across backward calls") {
  auto x = Tensor<double>({3}, {1.0, -2.0, 0.5}, true);
  backward(sum(square(x)));
  backward(sum(mul_scalar(x, 4.0)));
  CHECK(x.grad_data()[0] == doctest::Approx(2.0 + 4.0));
  CHECK(x.grad_data()[1] == doctest::Approx(-4.0 + 4.0));
  CHECK(x.grad_data()[2] == doctest::Approx(1.0 + 4.0));
  x.zero_grad();
  CHECK_FALSE(x.has_grad());
  CHECK(x.grad().at(0) == 0.0);
}

TEST_CASE("a shared subexpression receives both contributions") {
  auto x = Tensor<double>::scalar(3.0, true);
  const auto y = square(x);
  backward(add(y, mul(y, x)));  // x^2 + x^3
  CHECK(x.grad_data()[0] == doctest::Approx(2 * 3.0 + 3 * 9.0));
}

TEST_CASE("backward misuse raises AutogradError") {
  auto x = Tensor<double>({2}, {1.0, 2.0}, true);
  CHECK_THROWS_AS(backward(mul_scalar(x, 2.0)), AutogradError);
  CHECK_THROWS_AS(backward(sum(Tensor<double>({2}, {1.0, 2.0}))), AutogradError);

  const auto loss = sum(square(x));
  backward(loss);
  CHECK_THROWS_AS(backward(loss), AutogradError);

  const auto h = square(x);
  backward(sum(h));
  CHECK_THROWS_AS(backward(sum(h)), AutogradError);
}

TEST_CASE("no-grad guard suppresses recording and restores the mode") {
  auto x = Tensor<double>({2}, {1.0, 2.0}, true);
  {
    NoGradGuard guard;
    CHECK_FALSE(grad_enabled());
    const auto y = square(x);
    CHECK(y.is_leaf());
    CHECK_FALSE(y.requires_grad());
  }
  CHECK(grad_enabled());
  CHECK_FALSE(square(x).is_leaf());
}

TEST_CASE("anomaly detection names the producing op") {
  const auto x = Tensor<double>({2}, {-1.0, 1.0}, true);
  CHECK_NOTHROW(log(x));
  set_anomaly_detection(true);
  try {
    (void)log(x);
    FAIL("expected NonFiniteError");
  } catch (const NonFiniteError& e) {
    CHECK(std::string(e.what()).find("'log'") != std::string::npos);
  }
  set_anomaly_detection(false);
  CHECK_FALSE(anomaly_detection());
}

TEST_CASE("custom functions use their registered backward") {
  CustomFunction<double> ste;
  ste.name = "ste_sign";
  ste.forward = [](const Tensor<double>& x, std::vector<Tensor<double>>& saved) {
    saved.push_back(x);
    std::vector<double> v(x.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = x.at(i) >= 0 ? 1.0 : -1.0;
    return Tensor<double>(x.shape(), v);
  };
  ste.backward = [](const std::vector<Tensor<double>>& saved, const Tensor<double>& g) {
    std::vector<double> v(g.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::abs(saved[0].at(i)) <= 1.0 ? 7.0 * g.at(i) : 0.0;
    return Tensor<double>(g.shape(), v);
  };
  auto x = Tensor<double>({3}, {-0.5, 0.25, 3.0}, true);
  const auto y = apply(ste, x);
  CHECK(y.at(0) == -1.0);
  CHECK(y.at(2) == 1.0);
  CHECK(y.node()->op == "ste_sign");
  backward(sum(mul_scalar(y, 2.0)));
  CHECK(x.grad_data()[0] == 14.0);
  CHECK(x.grad_data()[1] == 14.0);
  CHECK(x.grad_data()[2] == 0.0);

  CustomFunction<double> bad = ste;
  bad.backward = [](const std::vector<Tensor<double>>&, const Tensor<double>&) {
    return Tensor<double>::zeros({5});
  };
  auto z = Tensor<double>({3}, {1.0, 2.0, 3.0}, true);
  CHECK_THROWS_AS(backward(sum(apply(bad, z))), AutogradError);
}

TEST_CASE("reshape shares storage, select and stack round-trip") {
  Gen g(14);
  auto x = test::random_tensor<double>(g, {4, 2, 3}, -1.0, 1.0, true);
  const auto r = reshape(x, {8, 3});
  CHECK(r.data().data() == x.data().data());
  CHECK_THROWS_AS(reshape(x, {5, 5}), ShapeError);
  std::vector<Tensor<double>> parts;
  for (std::size_t i = 0; i < 4; ++i) parts.push_back(select(x, i));
  const auto s = stack(parts);
  REQUIRE(s.shape() == x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(s.at(i) == x.at(i));
  backward(sum(mul(s, s)));
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(x.grad_data()[i] == doctest::Approx(2 * x.at(i)));
  CHECK_THROWS_AS(select(x, 4), ShapeError);
  CHECK_THROWS_AS(stack(std::vector<Tensor<double>>{}), ShapeError);
}

TEST_CASE("matmul matches a triple loop and rejects inner mismatch") {
  Gen g(15);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t m = test::uniform_size(g, 1, 9), k = test::uniform_size(g, 1, 9), n = test::uniform_size(g, 1, 9);
    const auto a = test::random_tensor<double>(g, {m, k});
    const auto b = test::random_tensor<double>(g, {k, n});
    const auto c = matmul(a, b);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0;
        for (std::size_t p = 0; p < k; ++p) acc += a.at(i * k + p) * b.at(p * n + j);
        CHECK(c.at(i * n + j) == doctest::Approx(acc).epsilon(1e-12));
      }
    }
  }
  CHECK_THROWS_AS(matmul(Tensor<double>::zeros({2, 3}), Tensor<double>::zeros({4, 2})), ShapeError);
}

TEST_CASE("clamp passes gradient only inside the interval") {
  auto x = Tensor<double>({4}, {-0.5, 0.0, 0.5, 1.5}, true);
  const auto y = clamp(x, 0.0, 1.0);
  CHECK(y.at(0) == 0.0);
  CHECK(y.at(3) == 1.0);
  backward(sum(y));
  CHECK(x.grad_data()[0] == 0.0);
  CHECK(x.grad_data()[1] == 1.0);
  CHECK(x.grad_data()[2] == 1.0);
  CHECK(x.grad_data()[3] == 0.0);
}

TEST_CASE("property: random compositions agree with central differences") {
  Gen g(16);
  for (int trial = 0; trial < 20; ++trial) {
    const Shape s = test::random_shape(g, 3, 4);
    const auto a = test::random_tensor<double>(g, s, 0.2, 1.5);
    const auto b = test::random_tensor<double>(g, s, -1.0, 1.0);
    const auto report = gradcheck(
        "composite",
        [](const std::vector<Tensor<double>>& v) {
          return add(mul(tanh(v[1]), log(v[0])), div(sigmoid(v[1]), add_scalar(square(v[0]), 1.0)));
        },
        {a, b}, 100 + static_cast<std::uint64_t>(trial));
    CHECK_MESSAGE(report.pass, report.detail);
  }
}
