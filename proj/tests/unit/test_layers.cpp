#include <cmath>

#include "doctest.h"
#include "has8/errors.hpp"
#include "has8/layers.hpp"
#include "has8/ops.hpp"
#include "support.hpp"

using namespace has8;
using has8::test::Gen;

namespace {

// Direct cross-correlation with zero padding.
double conv_at(const Tensor<double>& x, const Tensor<double>& w, std::size_t n, std::size_t f, std::size_t oy,
               std::size_t ox, const Conv2dParams& p) {
  const std::size_t c_in = x.size(1), h = x.size(2), wd = x.size(3), k = w.size(2);
  double acc = 0;
  for (std::size_t c = 0; c < c_in; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const long iy = static_cast<long>(oy * p.stride + ky) - static_cast<long>(p.pad);
        const long ix = static_cast<long>(ox * p.stride + kx) - static_cast<long>(p.pad);
        if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(wd)) continue;
        acc += x.at(((n * c_in + c) * h + static_cast<std::size_t>(iy)) * wd + static_cast<std::size_t>(ix)) *
               w.at(((f * c_in + c) * k + ky) * k + kx);
      }
    }
  }
  return acc;
}

}  // namespace

TEST_CASE("conv MACs follow out_h * out_w * C_in * C_out * k^2") {
  Rng rng(0);
  Conv2d<float> conv(3, 16, 3, Conv2dParams{1, 1}, true, rng);
  CHECK(conv.macs({1, 3, 32, 32}) == 442368);
  CHECK(conv.macs({4, 3, 32, 32}) == 4 * 442368);
  Conv2d<float> strided(8, 8, 3, Conv2dParams{2, 1}, false, rng);
  CHECK(strided.macs({1, 8, 16, 16}) == 8ull * 8 * 9 * 8 * 8);
  Linear<float> fc(100, 10, true, rng);
  CHECK(fc.macs({1, 100}) == 1000);
  CHECK(fc.macs({3, 100}) == 3000);
  CHECK(MaxPool2d<float>(2).macs({1, 4, 8, 8}) == 0);
}

TEST_CASE("conv output extent uses floor division") {
  CHECK(conv_output_extent(32, 3, {1, 1}) == 32);
  CHECK(conv_output_extent(7, 3, {2, 1}) == 4);
  CHECK(conv_output_extent(8, 3, {2, 0}) == 3);
  CHECK(conv_output_extent(224, 7, {2, 3}) == 112);
  CHECK_THROWS_AS(conv_output_extent(2, 5, {1, 1}), ShapeError);
  CHECK_THROWS_AS(conv_output_extent(5, 3, {0, 1}), ShapeError);
}

TEST_CASE("conv2d matches direct cross-correlation on random shapes") {
  Gen g(31);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t n = test::uniform_size(g, 1, 3), c = test::uniform_size(g, 1, 4),
                      f = test::uniform_size(g, 1, 5), k = test::uniform_size(g, 1, 3);
    const Conv2dParams p{test::uniform_size(g, 1, 2), test::uniform_size(g, 0, 1)};
    const std::size_t h = test::uniform_size(g, k, 9), w = test::uniform_size(g, k, 9);
    const auto x = test::random_tensor<double>(g, {n, c, h, w});
    const auto wt = test::random_tensor<double>(g, {f, c, k, k});
    const auto b = test::random_tensor<double>(g, {f});
    const auto y = conv2d(x, wt, std::optional<Tensor<double>>(b), p);
    const std::size_t oh = conv_output_extent(h, k, p), ow = conv_output_extent(w, k, p);
    REQUIRE(y.shape() == Shape{n, f, oh, ow});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t o = 0; o < f; ++o) {
        for (std::size_t yy = 0; yy < oh; ++yy) {
          for (std::size_t xx = 0; xx < ow; ++xx) {
            CHECK(y.at(((i * f + o) * oh + yy) * ow + xx) ==
                  doctest::Approx(conv_at(x, wt, i, o, yy, xx, p) + b.at(o)).epsilon(1e-12));
          }
        }
      }
    }
  }
}

TEST_CASE("maxpool keeps window maxima and drops ragged edges") {
  const Tensor<double> x({1, 1, 3, 5}, {1, 9, 2, 3, 7,  //
                                        4, 5, 8, 6, 7,  //
                                        9, 9, 9, 9, 9});
  const auto y = maxpool2d(x, 2);
  REQUIRE(y.shape() == Shape{1, 1, 1, 2});
  CHECK(y.at(0) == 9);
  CHECK(y.at(1) == 8);
  auto xg = x.clone().set_requires_grad(true);
  backward(sum(maxpool2d(xg, 2)));
  CHECK(xg.grad_data()[1] == 1.0);
  CHECK(xg.grad_data()[7] == 1.0);
  CHECK(xg.grad_data()[4] == 0.0);
  CHECK_THROWS_AS(maxpool2d(x, 4), ShapeError);
}

TEST_CASE("batch norm normalizes per channel and tracks unbiased running variance") {
  Gen g(32);
  const auto x = test::random_tensor<double>(g, {6, 3, 2, 2}, -2.0, 3.0);
  BatchNorm<double> bn(3, 0.1, 1e-5);
  const auto y = bn.forward(x);
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0, m2 = 0;
    std::vector<double> vals;
    for (std::size_t n = 0; n < 6; ++n) {
      for (std::size_t p = 0; p < 4; ++p) vals.push_back(x.at((n * 3 + c) * 4 + p));
    }
    for (double v : vals) mean += v;
    mean /= static_cast<double>(vals.size());
    for (double v : vals) m2 += (v - mean) * (v - mean);
    const double var = m2 / static_cast<double>(vals.size());
    for (std::size_t n = 0; n < 6; ++n) {
      for (std::size_t p = 0; p < 4; ++p) {
        const std::size_t i = (n * 3 + c) * 4 + p;
        CHECK(y.at(i) == doctest::Approx((x.at(i) - mean) / std::sqrt(var + 1e-5)).epsilon(1e-12));
      }
    }
    CHECK(bn.running_mean.at(c) == doctest::Approx(0.1 * mean).epsilon(1e-12));
    CHECK(bn.running_var.at(c) ==
          doctest::Approx(0.9 + 0.1 * m2 / static_cast<double>(vals.size() - 1)).epsilon(1e-12));
  }
  bn.set_training(false);
  const auto e = bn.forward(x);
  CHECK(e.at(0) == doctest::Approx((x.at(0) - bn.running_mean.at(0)) / std::sqrt(bn.running_var.at(0) + 1e-5)));
  BatchNorm<double> single(2);
  CHECK_THROWS_AS(single.forward(Tensor<double>::zeros({1, 2})), ValueError);
  CHECK_THROWS_AS(single.forward(Tensor<double>::zeros({4, 3})), ShapeError);
}

TEST_CASE("kaiming uniform stays within 1/sqrt(fan_in) and is seeded") {
  Rng a(5), b(5);
  Conv2d<double> c1(4, 6, 3, {}, true, a), c2(4, 6, 3, {}, true, b);
  const double bound = 1.0 / std::sqrt(36.0);
  double lo = 1, hi = -1;
  for (std::size_t i = 0; i < c1.weight.numel(); ++i) {
    CHECK(c1.weight.at(i) == c2.weight.at(i));
    lo = std::min(lo, c1.weight.at(i));
    hi = std::max(hi, c1.weight.at(i));
  }
  CHECK(lo >= -bound);
  CHECK(hi <= bound);
  CHECK(hi - lo > bound);
  CHECK(c1.bias->at(0) == 0.0);
}

TEST_CASE("per-timestep application equals a loop over steps") {
  Gen g(33);
  Rng rng(1);
  Conv2d<double> conv(2, 3, 3, Conv2dParams{1, 1}, true, rng);
  const auto x = test::random_tensor<double>(g, {8, 2, 2, 5, 5});
  const auto folded = apply_per_timestep(conv, x);
  REQUIRE(folded.shape() == Shape{8, 2, 3, 5, 5});
  const std::size_t per = 2 * 3 * 5 * 5;
  for (std::size_t t = 0; t < 8; ++t) {
    const auto y = conv.forward(select(x, t));
    for (std::size_t i = 0; i < per; ++i) CHECK(folded.at(t * per + i) == y.at(i));
  }
  CHECK_THROWS_AS(apply_per_timestep(conv, Tensor<double>::zeros({8})), ShapeError);
}

TEST_CASE("module shape propagation") {
  Rng rng(2);
  Conv2d<float> conv(3, 8, 3, Conv2dParams{2, 1}, false, rng);
  CHECK(conv.output_shape({2, 3, 9, 9}) == Shape{2, 8, 5, 5});
  CHECK_THROWS_AS(conv.output_shape({2, 4, 9, 9}), ShapeError);
  Linear<float> fc(12, 5, true, rng);
  CHECK(fc.output_shape({7, 12}) == Shape{7, 5});
  CHECK_THROWS_AS(fc.forward(Tensor<float>::zeros({2, 11})), ShapeError);
  CHECK(Flatten<float>().output_shape({2, 3, 4}) == Shape{2, 12});
  CHECK(MaxPool2d<float>(2).output_shape({1, 2, 5, 4}) == Shape{1, 2, 2, 2});
  std::vector<ParamRef<float>> params;
  conv.collect("c.", params);
  fc.collect("f.", params);
  REQUIRE(params.size() == 3);
  CHECK(params[0].name == "c.weight");
  CHECK(params[2].name == "f.bias");
}

TEST_CASE("linear computes x W^T + b") {
  const Tensor<double> x({2, 3}, {1, 2, 3, -1, 0, 2});
  const Tensor<double> w({2, 3}, {1, 0, -1, 2, 1, 0});
  const Tensor<double> b({2}, {0.5, -0.5});
  const auto y = linear(x, w, std::optional<Tensor<double>>(b));
  CHECK(y.at(0) == 1 - 3 + 0.5);
  CHECK(y.at(1) == 2 + 2 - 0.5);
  CHECK(y.at(2) == -1 - 2 + 0.5);
  CHECK(y.at(3) == -2 + 0 - 0.5);
}
