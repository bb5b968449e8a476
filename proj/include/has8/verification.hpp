#pragma once

// Independent oracles for the autodiff engine and the substitute backward
// rules: central differences for smooth ops, closed forms for the encoder,
// variance probes over the intensity grid and a forward-mode expansion of
// IF backpropagation through time. Everything runs in double precision.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "has8/codec.hpp"
#include "has8/tensor.hpp"

namespace has8 {

struct CheckReport {
  std::string name;
  double max_abs_err = 0.0;
  double max_rel_err = 0.0;
  bool pass = false;
  double tolerance = 0.0;
  std::size_t samples = 0;
  std::string detail;  // first offending sample on failure
};

// Central differences of a scalar function, one coordinate at a time.
Tensor<double> finite_diff(const std::function<double(const Tensor<double>&)>& f, const Tensor<double>& x,
                           double h = 1e-5);

// Compares reverse-mode gradients of sum(w * f(inputs)), with fixed random
// weights w, against central differences for every input. Errors are
// normalized by the largest finite-difference magnitude of each input.
using MultiFn = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;
CheckReport gradcheck(const std::string& name, const MultiFn& f, const std::vector<Tensor<double>>& inputs,
                      std::uint64_t seed, double tolerance = 1e-6, double h = 1e-5);

// Every differentiable op and layer outside the encoder and the spike
// threshold, on randomized small shapes.
std::vector<CheckReport> layer_gradchecks(std::uint64_t seed);

// Perturbations applied to the encoder under test while the oracle keeps the
// reference constants; used to show the checks are sensitive.
struct Mutation {
  int rescale_top = 7;
  double alpha_scale = 1.0;

  bool active() const { return rescale_top != 7 || alpha_scale != 1.0; }
  // "none" | "rescale-exponent" (7 -> 8) | "alpha" (+1%)
  static Mutation parse(const std::string& name);
};

// Backward of the bit-plane encoder, plane by plane, against the closed-form
// surrogate times the rescale factor and the 255 chain factor, on `grid`
// points x = i / (grid - 1). Relative tolerance 1e-9 (absolute 1e-12 where
// the closed form is zero).
CheckReport surrogate_equiv_check(const SurrogateSpec& spec, const Mutation& mutation = {},
                                  std::size_t grid = 1024);
// 3 surrogates x 2 rescale settings with the default FourierSine form, plus
// the alternate FourierSine form under both rescale settings.
std::vector<CheckReport> surrogate_equiv_suite(const Mutation& mutation = {}, double alpha = -10.0,
                                               int n_terms = 5);

struct VarianceRow {
  int k = 0;
  double unscaled = 0.0;
  double rescaled = 0.0;
  double envelope = 0.0;  // |alpha| pi k / 128
};

struct VarianceTable {
  SurrogateKind kind;
  std::vector<VarianceRow> rows;  // k = 0..7
};

struct VarianceProbe {
  std::vector<VarianceTable> tables;
  // SigSine and TanhSine: unscaled variance non-increasing in k, envelope
  // non-decreasing in k. FourierSine is reported only.
  std::vector<CheckReport> checks;
};

VarianceProbe variance_probe(double alpha = -10.0, int n_terms = 5, bool fourier_literal = true);

// Scalar IF chain over `steps` steps: current_t = w * 1, rate decoding
// y = sum_t s_t / steps. Compares dy/dw from the tape (one if_step per step)
// with a forward-mode sensitivity recursion that includes the reset terms.
// Tolerance 1e-10.
CheckReport bptt_brute_force_check(double weight, int steps = 3, double v_threshold = 1.0,
                                   double surrogate_alpha = 2.0);

// The fused 8-step IF node against the step-by-step tape and the
// forward-mode recursion, for random currents and output weights.
CheckReport fused_if_check(std::uint64_t seed, std::size_t neurons = 16);

struct SuiteReport {
  std::vector<CheckReport> checks;
  VarianceProbe variance;
  bool all_pass() const;
};

SuiteReport run_suite(const Mutation& mutation = {}, std::uint64_t seed = 1);

std::string suite_json(const SuiteReport& report);
std::string suite_summary(const SuiteReport& report);

}  // namespace has8
