#include <cmath>
#include <numbers>

#include "doctest.h"
#include "has8/autograd.hpp"
#include "has8/errors.hpp"
#include "has8/ops.hpp"
#include "has8/verification.hpp"
#include "json.hpp"

using namespace has8;

TEST_CASE("central differences of known functions") {
  const Tensor<double> x({3}, {0.5, -1.0, 2.0});
  const auto g = finite_diff(
      [](const Tensor<double>& t) {
        double s = 0;
        for (std::size_t i = 0; i < t.numel(); ++i) s += t.at(i) * t.at(i) * t.at(i);
        return s;
      },
      x);
  for (std::size_t i = 0; i < 3; ++i) CHECK(g.at(i) == doctest::Approx(3 * x.at(i) * x.at(i)).epsilon(1e-8));
  const auto s = finite_diff([](const Tensor<double>& t) { return std::sin(t.at(0)); }, Tensor<double>({1}, {0.3}));
  CHECK(s.at(0) == doctest::Approx(std::cos(0.3)).epsilon(1e-9));
}

TEST_CASE("gradcheck catches a wrong backward") {
  const auto good = gradcheck(
      "square", [](const std::vector<Tensor<double>>& in) { return square(in[0]); },
      {Tensor<double>({4}, {0.1, -0.7, 1.3, 2.0})}, 3);
  CHECK_MESSAGE(good.pass, good.detail);
  // Square with a backward that is off by a factor of 1.1.
  CustomFunction<double> wrong;
  wrong.name = "square_wrong";
  wrong.forward = [](const Tensor<double>& x, std::vector<Tensor<double>>& saved) {
    saved.push_back(x);
    return mul(x, x);
  };
  wrong.backward = [](const std::vector<Tensor<double>>& saved, const Tensor<double>& g) {
    return mul(g, mul_scalar(saved[0], 2.2));
  };
  const auto bad = gradcheck(
      "square_wrong", [&](const std::vector<Tensor<double>>& in) { return apply(wrong, in[0]); },
      {Tensor<double>({4}, {0.1, -0.7, 1.3, 2.0})}, 3);
  CHECK_FALSE(bad.pass);
  CHECK(bad.max_rel_err > 0.05);
}

TEST_CASE("the full suite passes unperturbed and every layer check passes") {
  const auto report = run_suite();
  for (const auto& c : report.checks) CHECK_MESSAGE(c.pass, c.name << ": " << c.detail);
  CHECK(report.all_pass());
  CHECK(report.checks.size() >= 10);
  const auto j = nlohmann::json::parse(suite_json(report));
  CHECK(j.contains("checks"));
  CHECK(suite_summary(report).find("FAIL") == std::string::npos);
}

TEST_CASE("mutations are detected") {
  for (const char* name : {"rescale-exponent", "alpha"}) {
    CAPTURE(name);
    const Mutation m = Mutation::parse(name);
    CHECK(m.active());
    const auto suite = surrogate_equiv_suite(m);
    bool any_fail = false;
    for (const auto& c : suite) any_fail = any_fail || !c.pass;
    CHECK(any_fail);
    CHECK_FALSE(run_suite(m).all_pass());
  }
  CHECK_FALSE(Mutation::parse("none").active());
  CHECK_THROWS_AS(Mutation::parse("bogus"), ValueError);
}

TEST_CASE("rescale mutation fails only where rescaling is on") {
  const Mutation m = Mutation::parse("rescale-exponent");
  SurrogateSpec off;
  off.rescale = false;
  CHECK(surrogate_equiv_check(off, m).pass);
  SurrogateSpec on;
  on.rescale = true;
  CHECK_FALSE(surrogate_equiv_check(on, m).pass);
}

TEST_CASE("variance probe ordering") {
  const auto probe = variance_probe();
  REQUIRE(probe.tables.size() == 3);
  for (const auto& c : probe.checks) CHECK_MESSAGE(c.pass, c.name << ": " << c.detail);
  for (const auto& table : probe.tables) {
    REQUIRE(table.rows.size() == 8);
    if (table.kind == SurrogateKind::kFourierSine) continue;
    for (std::size_t k = 1; k < 8; ++k) {
      CHECK(table.rows[k].unscaled <= table.rows[k - 1].unscaled * (1 + 1e-12));
      CHECK(table.rows[k].envelope >= table.rows[k - 1].envelope);
    }
    CHECK(table.rows[7].envelope == doctest::Approx(10 * std::numbers::pi * 7 / 128).epsilon(1e-14));
  }
}

TEST_CASE("BPTT through the reset path matches forward-mode sensitivities") {
  for (const double w : {0.3, 0.45, 0.6, 0.8, 1.1}) {
    CAPTURE(w);
    for (const int steps : {2, 3, 8}) {
      const auto r = bptt_brute_force_check(w, steps);
      CHECK_MESSAGE(r.pass, r.detail);
    }
  }
  for (const std::uint64_t seed : {1u, 2u, 3u}) {
    const auto r = fused_if_check(seed);
    CHECK_MESSAGE(r.pass, r.detail);
  }
}
