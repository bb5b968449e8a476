#pragma once

// Differentiable tensor ops. All ops record onto the tape when grad mode is
// on and an operand requires a gradient.

#include <cstddef>
#include <optional>
#include <vector>

#include "has8/autograd.hpp"
#include "has8/tensor.hpp"

namespace has8 {

// Elementwise, trailing-dimension broadcasting.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);

template <typename T> Tensor<T> add_scalar(const Tensor<T>& x, T c);
template <typename T> Tensor<T> mul_scalar(const Tensor<T>& x, T c);

template <typename T> Tensor<T> neg(const Tensor<T>& x);
template <typename T> Tensor<T> relu(const Tensor<T>& x);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T> Tensor<T> tanh(const Tensor<T>& x);
template <typename T> Tensor<T> exp(const Tensor<T>& x);
template <typename T> Tensor<T> log(const Tensor<T>& x);
template <typename T> Tensor<T> sin(const Tensor<T>& x);
template <typename T> Tensor<T> square(const Tensor<T>& x);
// Gradient passes where lo <= x <= hi, zero elsewhere.
template <typename T> Tensor<T> clamp(const Tensor<T>& x, T lo, T hi);

template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);

// Shares storage with x.
template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
// [N, ...] -> [N, prod(...)]
template <typename T> Tensor<T> flatten(const Tensor<T>& x);
// x[index] along the leading axis.
template <typename T> Tensor<T> select(const Tensor<T>& x, std::size_t index);
// Stacks equally shaped tensors along a new leading axis.
template <typename T> Tensor<T> stack(const std::vector<Tensor<T>>& parts);

// [M,K] x [K,N] -> [M,N]
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
// x [N,in], weight [out,in], bias [out] -> [N,out]
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight,
                 const std::optional<Tensor<T>>& bias);

struct Conv2dParams {
  std::size_t stride = 1;
  std::size_t pad = 0;
};

// Output extent along one axis; floor((extent + 2*pad - kernel)/stride) + 1.
// Throws ShapeError when the kernel does not fit the padded extent.
std::size_t conv_output_extent(std::size_t extent, std::size_t kernel,
                               const Conv2dParams& params);

// Cross-correlation. x [B,C,H,W], weight [F,C,kh,kw], bias [F].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight,
                 const std::optional<Tensor<T>>& bias, const Conv2dParams& params);

// Non-overlapping window (stride == window); trailing rows/cols that do not
// fill a window are dropped.
template <typename T> Tensor<T> maxpool2d(const Tensor<T>& x, std::size_t window);
// [N,C,H,W] -> [N,C]
template <typename T> Tensor<T> global_avg_pool(const Tensor<T>& x);

struct BatchNormParams {
  bool training = true;
  double momentum = 0.1;
  double eps = 1e-5;
};

// Per-channel normalization over every axis except axis 1 of x [N,C,...].
// Training mode normalizes with batch statistics and updates the running
// buffers in place (unbiased variance); eval mode uses the buffers.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, Tensor<T>& running_mean,
                     Tensor<T>& running_var, const BatchNormParams& params);

template <typename T> Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T> Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T> Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }

}  // namespace has8
