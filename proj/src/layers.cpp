#include "has8/layers.hpp"

#include <cmath>

#include "has8/errors.hpp"

namespace has8 {

template <typename T>
void kaiming_uniform(Tensor<T>& weight, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (T& v : weight.mutable_data()) v = static_cast<T>(dist(rng));
}

template <typename T>
Conv2d<T>::Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                  Conv2dParams params, bool with_bias, Rng& rng)
    : weight(Tensor<T>::zeros({out_channels, in_channels, kernel, kernel}, true)), params(params) {
  kaiming_uniform(weight, in_channels * kernel * kernel, rng);
  if (with_bias) bias = Tensor<T>::zeros({out_channels}, true);
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x) {
  return conv2d(x, weight, bias, params);
}

template <typename T>
void Conv2d<T>::collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
  out.push_back({prefix + "weight", &weight, true});
  if (bias) out.push_back({prefix + "bias", &*bias, true});
}

template <typename T>
Shape Conv2d<T>::output_shape(const Shape& in) const {
  if (in.size() != 4 || in[1] != weight.size(1)) {
    throw ShapeError("conv2d expects [B," + std::to_string(weight.size(1)) + ",H,W], got " +
                     to_string(in));
  }
  return {in[0], weight.size(0), conv_output_extent(in[2], weight.size(2), params),
          conv_output_extent(in[3], weight.size(3), params)};
}

template <typename T>
std::uint64_t Conv2d<T>::macs(const Shape& in) const {
  const Shape out = output_shape(in);
  return static_cast<std::uint64_t>(out[0]) * out[1] * in[1] * weight.size(2) * weight.size(3) *
         out[2] * out[3];
}

template <typename T>
Linear<T>::Linear(std::size_t in_features, std::size_t out_features, bool with_bias, Rng& rng)
    : weight(Tensor<T>::zeros({out_features, in_features}, true)) {
  kaiming_uniform(weight, in_features, rng);
  if (with_bias) bias = Tensor<T>::zeros({out_features}, true);
}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x) {
  return linear(x, weight, bias);
}

template <typename T>
void Linear<T>::collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
  out.push_back({prefix + "weight", &weight, true});
  if (bias) out.push_back({prefix + "bias", &*bias, true});
}

template <typename T>
Shape Linear<T>::output_shape(const Shape& in) const {
  if (in.size() != 2 || in[1] != weight.size(1)) {
    throw ShapeError("linear expects [B," + std::to_string(weight.size(1)) + "], got " + to_string(in));
  }
  return {in[0], weight.size(0)};
}

template <typename T>
std::uint64_t Linear<T>::macs(const Shape& in) const {
  return static_cast<std::uint64_t>(in[0]) * weight.size(0) * weight.size(1);
}

template <typename T>
BatchNorm<T>::BatchNorm(std::size_t channels, double momentum, double eps)
    : gamma(Tensor<T>::full({channels}, T(1), true)),
      beta(Tensor<T>::zeros({channels}, true)),
      running_mean(Tensor<T>::zeros({channels})),
      running_var(Tensor<T>::full({channels}, T(1))),
      momentum(momentum),
      eps(eps) {}

template <typename T>
Tensor<T> BatchNorm<T>::forward(const Tensor<T>& x) {
  return batch_norm(x, gamma, beta, running_mean, running_var,
                    BatchNormParams{this->training_, momentum, eps});
}

template <typename T>
void BatchNorm<T>::collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
  out.push_back({prefix + "weight", &gamma, true});
  out.push_back({prefix + "bias", &beta, true});
  out.push_back({prefix + "running_mean", &running_mean, false});
  out.push_back({prefix + "running_var", &running_var, false});
}

template <typename T>
Shape BatchNorm<T>::output_shape(const Shape& in) const {
  if (in.size() < 2 || in[1] != gamma.numel()) {
    throw ShapeError("batch_norm over " + std::to_string(gamma.numel()) + " channels got " +
                     to_string(in));
  }
  return in;
}

template <typename T>
Shape MaxPool2d<T>::output_shape(const Shape& in) const {
  if (in.size() != 4 || in[2] < window || in[3] < window) {
    throw ShapeError("maxpool2d window " + std::to_string(window) + " does not fit " + to_string(in));
  }
  return {in[0], in[1], in[2] / window, in[3] / window};
}

template <typename T>
Shape Flatten<T>::output_shape(const Shape& in) const {
  if (in.empty()) throw ShapeError("flatten needs at least one axis");
  return {in[0], in[0] == 0 ? 0 : numel(in) / in[0]};
}

template <typename T>
Tensor<T> apply_per_timestep(Module<T>& layer, const Tensor<T>& steps) {
  if (layer.stateful()) {
    throw std::invalid_argument("apply_per_timestep: layer '" + layer.kind() +
                                "' carries state across steps");
  }
  if (steps.dim() < 2) {
    throw ShapeError("apply_per_timestep expects [T, batch, ...], got " + to_string(steps.shape()));
  }
  const std::size_t t = steps.size(0);
  Shape merged(steps.shape().begin() + 1, steps.shape().end());
  merged[0] *= t;
  const Tensor<T> y = layer.forward(reshape(steps, merged));
  Shape split{t, y.size(0) / t};
  split.insert(split.end(), y.shape().begin() + 1, y.shape().end());
  return reshape(y, split);
}

#define HAS8_INSTANTIATE(T)                                          \
  template void kaiming_uniform<T>(Tensor<T>&, std::size_t, Rng&);   \
  template class Conv2d<T>;                                          \
  template class Linear<T>;                                          \
  template class BatchNorm<T>;                                       \
  template class MaxPool2d<T>;                                       \
  template class Flatten<T>;                                         \
  template Tensor<T> apply_per_timestep<T>(Module<T>&, const Tensor<T>&);

HAS8_INSTANTIATE(float)
HAS8_INSTANTIATE(double)
#undef HAS8_INSTANTIATE

}  // namespace has8
