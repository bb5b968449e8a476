#pragma once

// Tape recording, the backward pass, and registration of ops whose backward
// rule is not the derivative of their forward rule.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "has8/tensor.hpp"

namespace has8 {

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// When enabled every recorded op checks its output for NaN/Inf and throws
// NonFiniteError naming the op.
bool anomaly_detection();
void set_anomaly_detection(bool enabled);

template <typename T>
using BackwardFn = std::function<void(const TapeNode<T>&, BackwardContext<T>&)>;

// Attaches a tape node to `out` when grad mode is on and any input requires
// a gradient. Returns `out`.
template <typename T>
Tensor<T> record(std::string_view op, Tensor<T> out,
                 const std::vector<Tensor<T>>& inputs, BackwardFn<T> backward);

struct BackwardStats {
  std::size_t nodes_visited = 0;
};

// Reverse sweep from a scalar loss. Leaf gradients accumulate across calls;
// the tape is released as it is traversed, so a second call on the same
// graph throws AutogradError.
template <typename T>
BackwardStats backward(const Tensor<T>& loss);

// User-registered op with a substitute backward rule.
template <typename T>
struct CustomFunction {
  std::string name;
  // Runs untaped. Anything the backward rule needs goes into `saved`.
  std::function<Tensor<T>(const Tensor<T>& input, std::vector<Tensor<T>>& saved)> forward;
  // Receives exactly what forward saved plus dL/d(output); returns dL/d(input),
  // which must have the input's shape.
  std::function<Tensor<T>(const std::vector<Tensor<T>>& saved, const Tensor<T>& grad_output)>
      backward;
};

template <typename T>
Tensor<T> apply(const CustomFunction<T>& fn, const Tensor<T>& input);

}  // namespace has8
