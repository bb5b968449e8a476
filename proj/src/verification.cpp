#include "has8/verification.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include "json.hpp"

#include "has8/autograd.hpp"
#include "has8/errors.hpp"
#include "has8/neuron.hpp"
#include "has8/ops.hpp"
#include "has8/optim.hpp"

namespace has8 {
namespace {

constexpr double kPi = std::numbers::pi;
using Rng = std::mt19937_64;
using T64 = Tensor<double>;

T64 random_tensor(Shape shape, Rng& rng, double lo, double hi, double avoid = 0.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(numel(shape));
  for (auto& x : v) {
    do {
      x = dist(rng);
    } while (avoid > 0.0 && std::abs(x) < avoid);
  }
  return T64(std::move(shape), std::move(v));
}

T64 leaf_copy(const T64& t, bool requires_grad) {
  T64 c = t.clone();
  c.set_requires_grad(requires_grad);
  return c;
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

// --- closed forms used as the oracle ----------------------------------------
// Written from the formulas, not from the codec: the logistic derivative as
// 1 / (4 cosh^2(u/2)), sech^2 as 4 / (e^u + e^-u)^2, powers of two through
// std::pow.

double oracle_sigsine(double i, int k, double alpha) {
  const double period = std::pow(2.0, k);
  const double u = alpha * std::sin(kPi * i / period);
  const double ch = std::cosh(u / 2.0);
  return (1.0 / (4.0 * ch * ch)) * alpha * kPi / period * std::cos(kPi * i / period);
}

double oracle_tanhsine(double i, int k, double alpha) {
  const double period = std::pow(2.0, k);
  const double u = alpha * std::sin(kPi * i / period);
  const double e = std::exp(u) + std::exp(-u);
  return (4.0 / (e * e)) * alpha * kPi / period * std::cos(kPi * i / period);
}

double oracle_fouriersine(double i, int k, int n_terms, bool literal) {
  const double period = std::pow(2.0, k);
  double acc = 0.0;
  for (int n = 1; n <= n_terms; n += 2) acc += (2.0 / period) * std::cos(n * kPi * i / period);
  return literal ? 0.5 - acc : -acc;
}

double oracle_rescale(int k) { return k * std::pow(2.0, k - 7); }

double oracle_surrogate(const SurrogateSpec& spec, double i, int k) {
  switch (spec.kind) {
    case SurrogateKind::kSigSine: return oracle_sigsine(i, k, spec.alpha);
    case SurrogateKind::kTanhSine: return oracle_tanhsine(i, k, spec.alpha);
    case SurrogateKind::kFourierSine: return oracle_fouriersine(i, k, spec.n_terms, spec.fourier_literal);
  }
  return 0.0;
}

double oracle_arctan(double x, double alpha) {
  const double z = kPi / 2.0 * alpha * x;
  return alpha / 2.0 / (1.0 + z * z);
}

// Forward-mode sensitivities of s_t with respect to a scalar parameter p,
// given the currents c_t and their derivatives dc_t = dc_t/dp.
std::vector<double> if_sensitivity(const std::vector<double>& c, const std::vector<double>& dc, double th,
                                   double alpha) {
  double u = 0.0, s = 0.0, du = 0.0, ds = 0.0;
  std::vector<double> out;
  for (std::size_t t = 0; t < c.size(); ++t) {
    const double u_new = (1.0 - s) * u + c[t];
    const double du_new = (1.0 - s) * du - ds * u + dc[t];
    const double s_new = (u_new - th >= 0.0) ? 1.0 : 0.0;
    const double ds_new = oracle_arctan(u_new - th, alpha) * du_new;
    u = u_new;
    s = s_new;
    du = du_new;
    ds = ds_new;
    out.push_back(ds);
  }
  return out;
}

void finish(CheckReport& r) { r.pass = r.max_rel_err <= r.tolerance; }

}  // namespace

Mutation Mutation::parse(const std::string& name) {
  Mutation m;
  if (name == "none" || name.empty()) return m;
  if (name == "rescale-exponent") {
    m.rescale_top = 8;
  } else if (name == "alpha") {
    m.alpha_scale = 1.01;
  } else {
    throw ValueError("unknown mutation '" + name + "' (expected none, rescale-exponent or alpha)");
  }
  return m;
}

T64 finite_diff(const std::function<double(const T64&)>& f, const T64& x, double h) {
  NoGradGuard guard;
  T64 probe = x.clone();
  auto v = probe.mutable_data();
  std::vector<double> g(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double orig = v[i];
    v[i] = orig + h;
    const double fp = f(probe);
    v[i] = orig - h;
    const double fm = f(probe);
    v[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return T64(x.shape(), std::move(g));
}

CheckReport gradcheck(const std::string& name, const MultiFn& f, const std::vector<T64>& inputs,
                      std::uint64_t seed, double tolerance, double h) {
  CheckReport r;
  r.name = name;
  r.tolerance = tolerance;

  Shape out_shape;
  {
    NoGradGuard guard;
    out_shape = f(inputs).shape();
  }
  Rng rng(seed);
  const T64 w = random_tensor(out_shape, rng, -1.0, 1.0);
  auto objective = [&](const std::vector<T64>& in) { return sum(mul(f(in), w)); };

  std::vector<T64> leaves;
  for (const auto& in : inputs) leaves.push_back(leaf_copy(in, true));
  backward(objective(leaves));

  for (std::size_t idx = 0; idx < inputs.size(); ++idx) {
    const T64 numeric = finite_diff(
        [&](const T64& xi) {
          std::vector<T64> in = inputs;
          in[idx] = xi;
          return objective(in).item();
        },
        inputs[idx], h);
    const auto n = numeric.data();
    const T64 analytic = leaves[idx].grad();
    const auto a = analytic.data();
    double scale = 0.0;
    for (const double v : n) scale = std::max(scale, std::abs(v));
    scale = std::max(scale, 1e-8);
    for (std::size_t i = 0; i < n.size(); ++i) {
      const double err = std::abs(a[i] - n[i]);
      if (err > r.max_abs_err) r.max_abs_err = err;
      if (err / scale > r.max_rel_err) {
        r.max_rel_err = err / scale;
        if (r.max_rel_err > tolerance) {
          r.detail = "input " + std::to_string(idx) + " index " + std::to_string(i) + ": autodiff " + fmt(a[i]) +
                     ", finite difference " + fmt(n[i]);
        }
      }
      ++r.samples;
    }
  }
  finish(r);
  return r;
}

std::vector<CheckReport> layer_gradchecks(std::uint64_t seed) {
  Rng rng(seed);
  auto next = [&] { return rng(); };
  auto rt = [&](Shape s, double lo = -1.0, double hi = 1.0, double avoid = 0.0) {
    return random_tensor(std::move(s), rng, lo, hi, avoid);
  };
  std::uniform_int_distribution<std::size_t> ext(2, 4);
  const std::size_t n = ext(rng), c = ext(rng), h = ext(rng) + 2, w = ext(rng) + 2;

  std::vector<CheckReport> out;
  auto check = [&](const std::string& name, const MultiFn& f, const std::vector<T64>& in) {
    out.push_back(gradcheck(name, f, in, next()));
  };

  check("add_broadcast", [](const auto& v) { return add(v[0], v[1]); }, {rt({n, c}), rt({c})});
  check("sub", [](const auto& v) { return sub(v[0], v[1]); }, {rt({n, c}), rt({n, c})});
  check("mul_broadcast", [](const auto& v) { return mul(v[0], v[1]); }, {rt({n, 1, c}), rt({c})});
  check("div", [](const auto& v) { return div(v[0], v[1]); }, {rt({n, c}), rt({n, c}, 0.5, 2.0)});
  check("add_scalar", [](const auto& v) { return add_scalar(v[0], 0.3); }, {rt({n, c})});
  check("mul_scalar", [](const auto& v) { return mul_scalar(v[0], -1.7); }, {rt({n, c})});
  check("neg", [](const auto& v) { return neg(v[0]); }, {rt({n, c})});
  check("relu", [](const auto& v) { return relu(v[0]); }, {rt({n, c, h}, -1.0, 1.0, 1e-3)});
  check("sigmoid", [](const auto& v) { return sigmoid(v[0]); }, {rt({n, c}, -3.0, 3.0)});
  check("tanh", [](const auto& v) { return tanh(v[0]); }, {rt({n, c}, -3.0, 3.0)});
  check("exp", [](const auto& v) { return exp(v[0]); }, {rt({n, c})});
  check("log", [](const auto& v) { return log(v[0]); }, {rt({n, c}, 0.5, 3.0)});
  check("sin", [](const auto& v) { return sin(v[0]); }, {rt({n, c}, -3.0, 3.0)});
  check("square", [](const auto& v) { return square(v[0]); }, {rt({n, c})});
  check("clamp", [](const auto& v) { return clamp(v[0], -0.5, 0.5); },
        {random_tensor({n, c}, rng, -0.45, 0.45)});
  check("sum", [](const auto& v) { return sum(v[0]); }, {rt({n, c})});
  check("mean", [](const auto& v) { return mean(v[0]); }, {rt({n, c})});
  check("reshape", [=](const auto& v) { return reshape(v[0], Shape{c, n}); }, {rt({n, c})});
  check("select", [](const auto& v) { return select(v[0], 1); }, {rt({3, n, c})});
  check("stack", [](const auto& v) { return stack(std::vector<T64>{v[0], v[1]}); }, {rt({n, c}), rt({n, c})});
  check("matmul", [](const auto& v) { return matmul(v[0], v[1]); }, {rt({n, c}), rt({c, h})});
  check("linear", [](const auto& v) { return linear(v[0], v[1], std::optional<T64>(v[2])); },
        {rt({n, c}), rt({h, c}), rt({h})});
  check("conv2d_s1_p1",
        [](const auto& v) { return conv2d(v[0], v[1], std::optional<T64>(v[2]), Conv2dParams{1, 1}); },
        {rt({n, c, h, w}), rt({3, c, 3, 3}), rt({3})});
  check("conv2d_s2_p0",
        [](const auto& v) { return conv2d(v[0], v[1], std::optional<T64>(), Conv2dParams{2, 0}); },
        {rt({n, c, h + 1, w}), rt({2, c, 3, 3})});
  check("conv2d_1x1_s2",
        [](const auto& v) { return conv2d(v[0], v[1], std::optional<T64>(), Conv2dParams{2, 0}); },
        {rt({n, c, h, w}), rt({4, c, 1, 1})});
  check("maxpool2d", [](const auto& v) { return maxpool2d(v[0], 2); }, {rt({n, c, 2 * h, 2 * w})});
  check("global_avg_pool", [](const auto& v) { return global_avg_pool(v[0]); }, {rt({n, c, h, w})});
  check("batch_norm_train",
        [=](const auto& v) {
          T64 rm = T64::zeros({c}), rv = T64::full({c}, 1.0);
          return batch_norm(v[0], v[1], v[2], rm, rv, BatchNormParams{true, 0.1, 1e-5});
        },
        {rt({n, c, h, w}), rt({c}, 0.5, 1.5), rt({c})});
  const T64 run_mean = rt({c}), run_var = rt({c}, 0.5, 2.0);
  check("batch_norm_eval",
        [=](const auto& v) {
          T64 rm = run_mean.clone(), rv = run_var.clone();
          return batch_norm(v[0], v[1], v[2], rm, rv, BatchNormParams{false, 0.1, 1e-5});
        },
        {rt({n, c, h, w}), rt({c}, 0.5, 1.5), rt({c})});
  std::vector<std::uint8_t> labels(n);
  for (auto& l : labels) l = static_cast<std::uint8_t>(rng() % c);
  check("cross_entropy", [=](const auto& v) { return cross_entropy(v[0], labels); }, {rt({n, c}, -2.0, 2.0)});
  check("decode_rate", [](const auto& v) { return decode_rate(SpikeTrain<double>::trusted(v[0])); },
        {rt({8, n, c}, 0.0, 1.0)});
  check("decode_bitplane", [](const auto& v) { return decode_bitplane(SpikeTrain<double>::trusted(v[0])); },
        {rt({8, n, c}, 0.0, 1.0)});
  check("mlp_2layer",
        [](const auto& v) {
          const T64 hidden = tanh(linear(v[0], v[1], std::optional<T64>(v[2])));
          return linear(hidden, v[3], std::optional<T64>(v[4]));
        },
        {rt({n, c}), rt({h, c}), rt({h}), rt({3, h}), rt({3})});
  return out;
}

CheckReport surrogate_equiv_check(const SurrogateSpec& spec, const Mutation& mutation, std::size_t grid) {
  spec.validate();
  CheckReport r;
  r.name = "surrogate_equiv[" + std::string(surrogate_name(spec.kind)) + (spec.rescale ? ",rescale" : ",plain") +
           (spec.kind == SurrogateKind::kFourierSine ? (spec.fourier_literal ? ",literal" : ",corrected") : "") +
           "]";
  r.tolerance = 1e-9;
  constexpr double kAbsFloor = 1e-12;

  SurrogateSpec under_test = spec;
  under_test.alpha = spec.alpha * mutation.alpha_scale;
  CodecConfig codec;
  codec.rescale_top = mutation.rescale_top;

  std::vector<double> xs(grid);
  for (std::size_t i = 0; i < grid; ++i) xs[i] = static_cast<double>(i) / static_cast<double>(grid - 1);
  const T64 x0({grid}, xs);

  for (int t = 0; t < 8; ++t) {
    const int k = 7 - t;
    T64 x = leaf_copy(x0, true);
    const SpikeTrain<double> planes = bitplane_encode(x, under_test, codec);
    backward(sum(select(planes.tensor(), static_cast<std::size_t>(t))));
    const auto got = x.grad_data();
    for (std::size_t i = 0; i < grid; ++i) {
      const double level = std::round(255.0 * xs[i]);
      const double want = 255.0 * oracle_surrogate(spec, level, k) * (spec.rescale ? oracle_rescale(k) : 1.0);
      const double err = std::abs(got[i] - want);
      const double rel = std::abs(want) > kAbsFloor ? err / std::abs(want) : (err > kAbsFloor ? err / kAbsFloor : 0.0);
      r.max_abs_err = std::max(r.max_abs_err, err);
      if (rel > r.max_rel_err) {
        r.max_rel_err = rel;
        if (rel > r.tolerance) {
          r.detail = std::string(surrogate_name(spec.kind)) + " k=" + std::to_string(k) +
                     " I=" + std::to_string(static_cast<int>(level)) + ": got " + fmt(got[i]) + ", want " + fmt(want);
        }
      }
      ++r.samples;
    }
  }
  finish(r);
  return r;
}

std::vector<CheckReport> surrogate_equiv_suite(const Mutation& mutation, double alpha, int n_terms) {
  std::vector<CheckReport> out;
  for (const auto kind : {SurrogateKind::kSigSine, SurrogateKind::kTanhSine, SurrogateKind::kFourierSine}) {
    for (const bool rescale : {false, true}) {
      SurrogateSpec s;
      s.kind = kind;
      s.alpha = alpha;
      s.n_terms = n_terms;
      s.rescale = rescale;
      out.push_back(surrogate_equiv_check(s, mutation));
    }
  }
  for (const bool rescale : {false, true}) {
    SurrogateSpec s;
    s.kind = SurrogateKind::kFourierSine;
    s.n_terms = n_terms;
    s.rescale = rescale;
    s.fourier_literal = !s.fourier_literal;
    out.push_back(surrogate_equiv_check(s, mutation));
  }
  return out;
}

VarianceProbe variance_probe(double alpha, int n_terms, bool fourier_literal) {
  VarianceProbe probe;
  auto variance = [](const std::vector<double>& v) {
    double mean = 0.0;
    for (const double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (const double x : v) ss += (x - mean) * (x - mean);
    return ss / static_cast<double>(v.size());
  };
  for (const auto kind : {SurrogateKind::kSigSine, SurrogateKind::kTanhSine, SurrogateKind::kFourierSine}) {
    SurrogateSpec spec;
    spec.kind = kind;
    spec.alpha = alpha;
    spec.n_terms = n_terms;
    spec.fourier_literal = fourier_literal;
    VarianceTable table{kind, {}};
    for (int k = 0; k < 8; ++k) {
      std::vector<double> plain, scaled;
      for (int i = 0; i < 256; ++i) {
        const double g = surrogate_grad(spec, i, k);
        plain.push_back(g);
        scaled.push_back(rescale(k, g));
      }
      table.rows.push_back({k, variance(plain), variance(scaled), std::abs(alpha) * kPi * k / 128.0});
    }
    if (kind != SurrogateKind::kFourierSine) {
      const std::string name(surrogate_name(kind));
      CheckReport dec, env;
      dec.name = "variance_unscaled_nonincreasing[" + name + "]";
      env.name = "envelope_nondecreasing[" + name + "]";
      dec.samples = env.samples = 7;
      dec.pass = env.pass = true;
      for (int k = 0; k + 1 < 8; ++k) {
        const auto& a = table.rows[k];
        const auto& b = table.rows[k + 1];
        const double up = b.unscaled - a.unscaled;
        if (up > dec.max_abs_err) dec.max_abs_err = up;
        if (b.unscaled > a.unscaled && dec.pass) {
          dec.pass = false;
          dec.detail = "variance rises from k=" + std::to_string(k) + " (" + fmt(a.unscaled) + ") to k=" +
                       std::to_string(k + 1) + " (" + fmt(b.unscaled) + ")";
        }
        if (b.envelope < a.envelope && env.pass) {
          env.pass = false;
          env.detail = "envelope falls from k=" + std::to_string(k) + " to k=" + std::to_string(k + 1);
        }
      }
      probe.checks.push_back(dec);
      probe.checks.push_back(env);
    }
    probe.tables.push_back(std::move(table));
  }
  return probe;
}

CheckReport bptt_brute_force_check(double weight, int steps, double v_threshold, double surrogate_alpha) {
  CheckReport r;
  r.name = "bptt_brute_force[w=" + fmt(weight) + ",T=" + std::to_string(steps) + "]";
  r.tolerance = 1e-10;
  r.samples = 1;

  IFConfig cfg{v_threshold, surrogate_alpha};
  T64 w = T64::scalar(weight, true);
  const T64 one = T64::scalar(1.0);
  IFState<double> state;
  T64 y;
  for (int t = 0; t < steps; ++t) {
    const T64 s = if_step(state, mul(w, one), cfg);
    y = y.defined() ? add(y, s) : s;
  }
  y = mul_scalar(y, 1.0 / steps);
  backward(sum(y));
  const double got = w.grad().item();

  const std::vector<double> c(static_cast<std::size_t>(steps), weight), dc(static_cast<std::size_t>(steps), 1.0);
  double want = 0.0;
  for (const double ds : if_sensitivity(c, dc, v_threshold, surrogate_alpha)) want += ds / steps;

  r.max_abs_err = std::abs(got - want);
  r.max_rel_err = r.max_abs_err;  // absolute criterion
  r.detail = "tape " + fmt(got) + ", expansion " + fmt(want);
  finish(r);
  return r;
}

CheckReport fused_if_check(std::uint64_t seed, std::size_t neurons) {
  CheckReport r;
  r.name = "fused_if_bptt";
  r.tolerance = 1e-10;
  Rng rng(seed);
  const T64 currents = random_tensor({8, neurons}, rng, -0.5, 1.5);
  const T64 weights = random_tensor({8, neurons}, rng, -1.0, 1.0);
  const IFConfig cfg;

  auto grad_of = [&](bool fused, T64& spikes_out) {
    T64 c = leaf_copy(currents, true);
    const SpikeTrain<double> s = fused ? if_over_time(c, cfg) : if_over_time_stepwise(c, cfg);
    spikes_out = s.tensor();
    backward(sum(mul(s.tensor(), weights)));
    return c.grad();
  };
  T64 s_fused, s_step;
  const T64 g_fused = grad_of(true, s_fused);
  const T64 g_step = grad_of(false, s_step);

  const auto cd = currents.data();
  const auto wd = weights.data();
  for (std::size_t i = 0; i < neurons; ++i) {
    std::vector<double> c(8);
    for (std::size_t t = 0; t < 8; ++t) c[t] = cd[t * neurons + i];
    for (std::size_t tau = 0; tau < 8; ++tau) {
      std::vector<double> dc(8, 0.0);
      dc[tau] = 1.0;
      const auto ds = if_sensitivity(c, dc, cfg.v_threshold, cfg.surrogate_alpha);
      double want = 0.0;
      for (std::size_t t = 0; t < 8; ++t) want += wd[t * neurons + i] * ds[t];
      const std::size_t flat = tau * neurons + i;
      for (const double got : {g_fused.at(flat), g_step.at(flat)}) {
        const double err = std::abs(got - want);
        r.max_abs_err = std::max(r.max_abs_err, err);
        if (err > r.max_rel_err) {
          r.max_rel_err = err;
          if (err > r.tolerance) {
            r.detail = "neuron " + std::to_string(i) + " step " + std::to_string(tau) + ": tape " + fmt(got) +
                       ", expansion " + fmt(want);
          }
        }
        ++r.samples;
      }
    }
  }
  for (std::size_t i = 0; i < s_fused.numel(); ++i) {
    if (s_fused.at(i) != s_step.at(i)) {
      r.max_rel_err = std::max(r.max_rel_err, 1.0);
      r.detail = "spike mismatch at flat index " + std::to_string(i);
      break;
    }
  }
  finish(r);
  return r;
}

bool SuiteReport::all_pass() const {
  const auto ok = [](const CheckReport& c) { return c.pass; };
  return std::all_of(checks.begin(), checks.end(), ok) &&
         std::all_of(variance.checks.begin(), variance.checks.end(), ok);
}

SuiteReport run_suite(const Mutation& mutation, std::uint64_t seed) {
  SuiteReport report;
  for (auto& c : surrogate_equiv_suite(mutation)) report.checks.push_back(std::move(c));
  for (auto& c : layer_gradchecks(seed)) report.checks.push_back(std::move(c));
  for (const double w : {0.4, 1.5, 0.0, 0.7}) report.checks.push_back(bptt_brute_force_check(w));
  report.checks.push_back(fused_if_check(seed));
  report.variance = variance_probe();
  return report;
}

std::string suite_json(const SuiteReport& report) {
  using Json = nlohmann::ordered_json;
  Json j = Json::object();
  j["pass"] = report.all_pass();
  auto check_json = [](const CheckReport& c) {
    Json o = Json::object();
    o["name"] = c.name;
    o["pass"] = c.pass;
    o["max_abs_err"] = c.max_abs_err;
    o["max_rel_err"] = c.max_rel_err;
    o["tolerance"] = c.tolerance;
    o["samples"] = c.samples;
    if (!c.detail.empty()) o["detail"] = c.detail;
    return o;
  };
  j["checks"] = Json::array();
  for (const auto& c : report.checks) j["checks"].push_back(check_json(c));
  for (const auto& c : report.variance.checks) j["checks"].push_back(check_json(c));
  j["variance"] = Json::array();
  for (const auto& t : report.variance.tables) {
    Json tj = Json::object();
    tj["surrogate"] = surrogate_name(t.kind);
    tj["rows"] = Json::array();
    for (const auto& row : t.rows) {
      tj["rows"].push_back({{"k", row.k}, {"unscaled", row.unscaled}, {"rescaled", row.rescaled},
                            {"envelope", row.envelope}});
    }
    j["variance"].push_back(tj);
  }
  return j.dump(2) + "\n";
}

std::string suite_summary(const SuiteReport& report) {
  std::ostringstream out;
  std::size_t passed = 0, total = 0;
  auto line = [&](const CheckReport& c) {
    ++total;
    passed += c.pass;
    out << (c.pass ? "PASS " : "FAIL ") << std::left << std::setw(48) << c.name << std::right << std::scientific
        << std::setprecision(2) << " abs " << c.max_abs_err << "  rel " << c.max_rel_err << "  tol "
        << c.tolerance << "  n=" << c.samples;
    if (!c.pass && !c.detail.empty()) out << "  (" << c.detail << ")";
    out << "\n";
  };
  for (const auto& c : report.checks) line(c);
  for (const auto& c : report.variance.checks) line(c);

  out << "\nper-plane gradient variance over I = 0..255\n";
  for (const auto& t : report.variance.tables) {
    out << surrogate_name(t.kind) << "\n  k    unscaled      rescaled      envelope\n";
    for (const auto& row : t.rows) {
      out << "  " << row.k << std::scientific << std::setprecision(4) << "  " << std::setw(12) << row.unscaled
          << "  " << std::setw(12) << row.rescaled << "  " << std::setw(12) << row.envelope << "\n";
    }
  }
  out << "\n" << passed << "/" << total << " checks passed\n";
  return out.str();
}

}  // namespace has8
