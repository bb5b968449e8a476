#pragma once

// Bit-plane spike encoder with substitute backward rules, and the two
// decoders that turn an 8-step spike train back into a real tensor.
//
// Encoding maps x in [0,1] to the intensity I = round(255 x) and emits one
// binary plane per timestep, most significant first: step t carries bit
// k = 7 - t of I. The forward is never differentiated; the backward uses
//
//   dL/dx = 255 * sum_t dL/dout[t] * G_k(I) * r(k)
//
// where G_k is the selected surrogate and r(k) = k / 2^(7-k) when rescaling
// is enabled (1 otherwise).

#include <array>
#include <cstddef>
#include <string>
#include <string_view>

#include "has8/tensor.hpp"

namespace has8 {

inline constexpr std::size_t kTimesteps = 8;

enum class SurrogateKind { kSigSine, kTanhSine, kFourierSine };

std::string_view surrogate_name(SurrogateKind kind);
// "sigsine" | "tanhsine" | "fouriersine" (case-insensitive)
SurrogateKind parse_surrogate(std::string_view name);

struct SurrogateSpec {
  SurrogateKind kind = SurrogateKind::kFourierSine;
  double alpha = -10.0;
  int n_terms = 5;
  bool rescale = true;
  // The printed FourierSine gradient keeps a constant 1/2; the corrected mode
  // is the term-wise derivative of the series.
  bool fourier_literal = true;

  // Throws ValueError on alpha == 0 or an even / non-positive n_terms.
  void validate() const;
};

struct CodecConfig {
  std::size_t timesteps = kTimesteps;
  double y_max = 255.0;
  // Exponent base of the rescale factor k / 2^(rescale_top - k). Only tests
  // that check mutation sensitivity change it.
  int rescale_top = 7;

  void validate() const;
};

double surrogate_grad_sigsine(double intensity, int k, double alpha);
double surrogate_grad_tanhsine(double intensity, int k, double alpha);
// Throws ValueError for even n_terms.
double surrogate_grad_fouriersine(double intensity, int k, int n_terms, bool literal);
// Selected surrogate, before rescaling.
double surrogate_grad(const SurrogateSpec& spec, double intensity, int k);

double rescale_factor(int k, const CodecConfig& cfg = {});
double rescale(int k, double g, const CodecConfig& cfg = {});

// Per-(intensity, plane) backward weight, including rescale but not the 255
// chain factor. Indexed [I][k].
using GradTable = std::array<std::array<double, 8>, 256>;
GradTable grad_table(const SurrogateSpec& spec, const CodecConfig& cfg = {});

// Binary tensor [T=8, ...]. Construction validates the leading extent and
// that every value is exactly 0 or 1.
template <typename T>
class SpikeTrain {
 public:
  SpikeTrain() = default;
  explicit SpikeTrain(Tensor<T> data);
  // Shape check only; for producers that emit 0/1 by construction.
  static SpikeTrain trusted(Tensor<T> data);

  const Tensor<T>& tensor() const { return data_; }
  const Shape& shape() const { return data_.shape(); }
  std::size_t steps() const { return data_.size(0); }
  // Shape of one step.
  Shape step_shape() const;

 private:
  Tensor<T> data_;
};

// x in [0,1]; values within 1e-6 outside are clamped, anything further out
// (or NaN) throws ValueError. Output shape is [8, x.shape...].
template <typename T>
SpikeTrain<T> bitplane_encode(const Tensor<T>& x, const SurrogateSpec& spec,
                              const CodecConfig& cfg = {});

// Y = sum_t O[t] / T
template <typename T>
Tensor<T> decode_rate(const SpikeTrain<T>& spikes);
// Y = sum_t O[t] 2^(T-1-t) / 255
template <typename T>
Tensor<T> decode_bitplane(const SpikeTrain<T>& spikes);

enum class DecoderKind { kRate, kBitplane };
std::string_view decoder_name(DecoderKind kind);
// "rate" | "bitplane"
DecoderKind parse_decoder(std::string_view name);

template <typename T>
Tensor<T> decode(const SpikeTrain<T>& spikes, DecoderKind kind);

}  // namespace has8
