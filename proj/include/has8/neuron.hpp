#pragma once

// Integrate-and-fire neuron with hard reset:
//
//   u[t] = (1 - s[t-1]) u[t-1] + I[t]
//   s[t] = H(u[t] - v_th),  H(x) = 1 iff x >= 0
//
// H is backpropagated through the arctangent surrogate
// alpha / (2 (1 + (pi/2 alpha x)^2)). The reset factor stays on the tape, so
// gradients also flow through s[t-1].

#include <functional>

#include "has8/codec.hpp"
#include "has8/tensor.hpp"

namespace has8 {

struct IFConfig {
  double v_threshold = 1.0;
  double surrogate_alpha = 2.0;

  void validate() const;
};

// Arctangent surrogate dH/dx at x = u - v_th.
double if_surrogate(double x, double alpha);

template <typename T>
struct IFState {
  Tensor<T> u;
  Tensor<T> s_prev;

  // Undefined tensors stand for zeros of the next current's shape.
  bool started() const { return u.defined(); }
};

// Zeros both tensors, keeping their shape.
template <typename T>
void reset(IFState<T>& state);

// One step; returns the spikes and advances the state.
template <typename T>
Tensor<T> if_step(IFState<T>& state, const Tensor<T>& current, const IFConfig& cfg);

// Applies `step` to each of the T leading slices of `inputs` on one tape and
// stacks the results. Throws ShapeError unless inputs has exactly 8 steps.
template <typename T>
Tensor<T> run_over_time(const std::function<Tensor<T>(const Tensor<T>&)>& step, const Tensor<T>& inputs);

// IF neurons over a whole [T, ...] current sequence, starting from rest.
// Recorded as a single tape node with a hand-written BPTT rule.
template <typename T>
SpikeTrain<T> if_over_time(const Tensor<T>& currents, const IFConfig& cfg);

// Same result built from if_step calls, one pair of tape nodes per step.
template <typename T>
SpikeTrain<T> if_over_time_stepwise(const Tensor<T>& currents, const IFConfig& cfg);

}  // namespace has8
