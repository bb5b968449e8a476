#include "has8/codec.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <memory>
#include <numbers>
#include <vector>

#include "has8/autograd.hpp"
#include "has8/errors.hpp"
#include "has8/simd/kernels.hpp"

namespace has8 {
namespace {

constexpr double kPi = std::numbers::pi;

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

void check_plane(int k) {
  if (k < 0 || k > 7) throw ValueError("bit plane index must be in 0..7, got " + std::to_string(k));
}

double sigmoid(double u) { return 1.0 / (1.0 + std::exp(-u)); }

}  // namespace

std::string_view surrogate_name(SurrogateKind kind) {
  switch (kind) {
    case SurrogateKind::kSigSine: return "sigsine";
    case SurrogateKind::kTanhSine: return "tanhsine";
    case SurrogateKind::kFourierSine: return "fouriersine";
  }
  return "?";
}

SurrogateKind parse_surrogate(std::string_view name) {
  const std::string s = lower(name);
  if (s == "sigsine") return SurrogateKind::kSigSine;
  if (s == "tanhsine") return SurrogateKind::kTanhSine;
  if (s == "fouriersine") return SurrogateKind::kFourierSine;
  throw ValueError("unknown surrogate '" + std::string(name) +
                   "' (expected sigsine, tanhsine or fouriersine)");
}

void SurrogateSpec::validate() const {
  if (alpha == 0.0 || !std::isfinite(alpha)) throw ValueError("surrogate alpha must be finite and nonzero");
  if (n_terms < 1 || n_terms % 2 == 0) {
    throw ValueError("fourier n_terms must be odd and >= 1, got " + std::to_string(n_terms));
  }
}

void CodecConfig::validate() const {
  if (timesteps != kTimesteps) {
    throw ValueError("bit-plane coding needs exactly 8 timesteps, got " + std::to_string(timesteps));
  }
  if (y_max != 255.0) throw ValueError("bit-plane coding needs y_max == 255");
}

double surrogate_grad_sigsine(double intensity, int k, double alpha) {
  check_plane(k);
  const double period = std::ldexp(1.0, k);
  const double phase = kPi * intensity / period;
  const double sg = sigmoid(alpha * std::sin(phase));
  return sg * (1.0 - sg) * (alpha * kPi / period) * std::cos(phase);
}

double surrogate_grad_tanhsine(double intensity, int k, double alpha) {
  check_plane(k);
  const double period = std::ldexp(1.0, k);
  const double phase = kPi * intensity / period;
  const double sech = 1.0 / std::cosh(alpha * std::sin(phase));
  return sech * sech * (alpha * kPi / period) * std::cos(phase);
}

double surrogate_grad_fouriersine(double intensity, int k, int n_terms, bool literal) {
  check_plane(k);
  if (n_terms < 1 || n_terms % 2 == 0) {
    throw ValueError("fourier n_terms must be odd and >= 1, got " + std::to_string(n_terms));
  }
  const double period = std::ldexp(1.0, k);
  const double coeff = std::ldexp(1.0, 1 - k);
  double series = 0.0;
  for (int n = 1; n <= n_terms; n += 2) series += coeff * std::cos(n * kPi * intensity / period);
  return literal ? 0.5 - series : -series;
}

double surrogate_grad(const SurrogateSpec& spec, double intensity, int k) {
  switch (spec.kind) {
    case SurrogateKind::kSigSine: return surrogate_grad_sigsine(intensity, k, spec.alpha);
    case SurrogateKind::kTanhSine: return surrogate_grad_tanhsine(intensity, k, spec.alpha);
    case SurrogateKind::kFourierSine:
      return surrogate_grad_fouriersine(intensity, k, spec.n_terms, spec.fourier_literal);
  }
  return 0.0;
}

double rescale_factor(int k, const CodecConfig& cfg) {
  check_plane(k);
  return static_cast<double>(k) / std::ldexp(1.0, cfg.rescale_top - k);
}

double rescale(int k, double g, const CodecConfig& cfg) { return rescale_factor(k, cfg) * g; }

GradTable grad_table(const SurrogateSpec& spec, const CodecConfig& cfg) {
  spec.validate();
  GradTable table{};
  for (int i = 0; i < 256; ++i) {
    for (int k = 0; k < 8; ++k) {
      const double g = surrogate_grad(spec, i, k);
      table[i][k] = spec.rescale ? rescale(k, g, cfg) : g;
    }
  }
  return table;
}

template <typename T>
SpikeTrain<T>::SpikeTrain(Tensor<T> data) : data_(std::move(data)) {
  if (data_.dim() < 2 || data_.size(0) != kTimesteps) {
    throw ShapeError("spike train must have shape [8, batch, ...], got " + to_string(data_.shape()));
  }
  const auto v = data_.data();
  const auto bad = std::find_if(v.begin(), v.end(), [](T x) { return x != T(0) && x != T(1); });
  if (bad != v.end()) {
    throw ValueError("spike train value " + std::to_string(static_cast<double>(*bad)) +
                     " at flat index " + std::to_string(bad - v.begin()) + " is not binary");
  }
}

template <typename T>
SpikeTrain<T> SpikeTrain<T>::trusted(Tensor<T> data) {
  if (data.dim() < 2 || data.size(0) != kTimesteps) {
    throw ShapeError("spike train must have shape [8, batch, ...], got " + to_string(data.shape()));
  }
  SpikeTrain out;
  out.data_ = std::move(data);
  return out;
}

template <typename T>
Shape SpikeTrain<T>::step_shape() const {
  return Shape(shape().begin() + 1, shape().end());
}

template <typename T>
SpikeTrain<T> bitplane_encode(const Tensor<T>& x, const SurrogateSpec& spec, const CodecConfig& cfg) {
  cfg.validate();
  constexpr double kMargin = 1e-6;
  const auto xd = x.data();
  for (std::size_t i = 0; i < xd.size(); ++i) {
    const double v = xd[i];
    if (!(v >= -kMargin && v <= 1.0 + kMargin)) {
      throw ValueError("encoder input " + std::to_string(v) + " at flat index " + std::to_string(i) +
                       " is outside [0,1]; normalize pixels before encoding");
    }
  }

  const GradTable table = grad_table(spec, cfg);
  auto weights = std::make_shared<std::vector<T>>(256 * 8);
  for (int i = 0; i < 256; ++i) {
    for (int k = 0; k < 8; ++k) (*weights)[i * 8 + k] = static_cast<T>(cfg.y_max * table[i][k]);
  }

  CustomFunction<T> fn;
  fn.name = "bitplane_encode";
  fn.forward = [](const Tensor<T>& in, std::vector<Tensor<T>>& saved) {
    const std::size_t n = in.numel();
    Shape shape{kTimesteps};
    shape.insert(shape.end(), in.shape().begin(), in.shape().end());
    Tensor<T> planes = Tensor<T>::zeros(shape);
    std::vector<std::uint8_t> level(n);
    simd::kernels<T>().bitplane_encode(in.data().data(), n, planes.mutable_data().data(), level.data());
    saved.push_back(Tensor<T>(in.shape(), std::vector<T>(level.begin(), level.end())));
    return planes;
  };
  fn.backward = [weights](const std::vector<Tensor<T>>& saved, const Tensor<T>& grad_out) {
    const Tensor<T>& level = saved.at(0);
    const std::size_t n = level.numel();
    const auto lv = level.data();
    const auto g = grad_out.data();
    const T* w = weights->data();
    std::vector<T> gx(n, T(0));
    for (std::size_t t = 0; t < kTimesteps; ++t) {
      const std::size_t k = 7 - t;
      const T* gt = g.data() + t * n;
      for (std::size_t i = 0; i < n; ++i) {
        gx[i] += gt[i] * w[static_cast<std::size_t>(lv[i]) * 8 + k];
      }
    }
    return Tensor<T>(level.shape(), std::move(gx));
  };
  return SpikeTrain<T>::trusted(apply(fn, x));
}

namespace {

// Y = sum_t w[t] O[t]
template <typename T>
Tensor<T> weighted_time_sum(const SpikeTrain<T>& spikes, const char* name, std::array<T, 8> w,
                            T post_scale) {
  const std::size_t n = numel(spikes.step_shape());
  const auto o = spikes.tensor().data();
  Tensor<T> out = Tensor<T>::zeros(spikes.step_shape());
  auto y = out.mutable_data();
  for (std::size_t i = 0; i < n; ++i) {
    T acc = T(0);
    for (std::size_t t = 0; t < kTimesteps; ++t) acc += o[t * n + i] * w[t];
    y[i] = acc / post_scale;
  }
  return record<T>(name, out, {spikes.tensor()},
                   [w, post_scale, n](const TapeNode<T>&, BackwardContext<T>& ctx) {
    if (!ctx.needs(0)) return;
    auto go = ctx.grad_in[0];
    for (std::size_t t = 0; t < kTimesteps; ++t) {
      const T wt = w[t] / post_scale;
      for (std::size_t i = 0; i < n; ++i) go[t * n + i] += ctx.grad_out[i] * wt;
    }
  });
}

}  // namespace

template <typename T>
Tensor<T> decode_rate(const SpikeTrain<T>& spikes) {
  std::array<T, 8> w;
  w.fill(T(1));
  return weighted_time_sum(spikes, "decode_rate", w, static_cast<T>(kTimesteps));
}

template <typename T>
Tensor<T> decode_bitplane(const SpikeTrain<T>& spikes) {
  std::array<T, 8> w;
  for (std::size_t t = 0; t < kTimesteps; ++t) w[t] = static_cast<T>(1u << (kTimesteps - 1 - t));
  return weighted_time_sum(spikes, "decode_bitplane", w, T(255));
}

std::string_view decoder_name(DecoderKind kind) {
  return kind == DecoderKind::kRate ? "rate" : "bitplane";
}

DecoderKind parse_decoder(std::string_view name) {
  const std::string s = lower(name);
  if (s == "rate" || s == "rd") return DecoderKind::kRate;
  if (s == "bitplane" || s == "bpd") return DecoderKind::kBitplane;
  throw ValueError("unknown decoder '" + std::string(name) + "' (expected rate or bitplane)");
}

template <typename T>
Tensor<T> decode(const SpikeTrain<T>& spikes, DecoderKind kind) {
  return kind == DecoderKind::kRate ? decode_rate(spikes) : decode_bitplane(spikes);
}

#define HAS8_INSTANTIATE(T)                                                             \
  template class SpikeTrain<T>;                                                         \
  template SpikeTrain<T> bitplane_encode<T>(const Tensor<T>&, const SurrogateSpec&,     \
                                            const CodecConfig&);                        \
  template Tensor<T> decode_rate<T>(const SpikeTrain<T>&);                              \
  template Tensor<T> decode_bitplane<T>(const SpikeTrain<T>&);                          \
  template Tensor<T> decode<T>(const SpikeTrain<T>&, DecoderKind);

HAS8_INSTANTIATE(float)
HAS8_INSTANTIATE(double)
#undef HAS8_INSTANTIATE

}  // namespace has8
