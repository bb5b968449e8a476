#include "has8/neuron.hpp"

#include <cmath>
#include <numbers>

#include "has8/autograd.hpp"
#include "has8/errors.hpp"
#include "has8/ops.hpp"
#include "has8/simd/kernels.hpp"

namespace has8 {

void IFConfig::validate() const {
  if (!(v_threshold > 0.0)) throw ValueError("IF threshold must be positive");
  if (!(surrogate_alpha > 0.0)) throw ValueError("IF surrogate alpha must be positive");
}

double if_surrogate(double x, double alpha) {
  const double z = std::numbers::pi / 2.0 * alpha * x;
  return alpha / (2.0 * (1.0 + z * z));
}

template <typename T>
void reset(IFState<T>& state) {
  if (!state.started()) return;
  state.u = Tensor<T>::zeros(state.u.shape());
  state.s_prev = Tensor<T>::zeros(state.u.shape());
}

template <typename T>
Tensor<T> if_step(IFState<T>& state, const Tensor<T>& current, const IFConfig& cfg) {
  if (!state.started()) {
    state.u = Tensor<T>::zeros(current.shape());
    state.s_prev = Tensor<T>::zeros(current.shape());
  }
  if (state.u.shape() != current.shape()) {
    throw ShapeError("IF current " + to_string(current.shape()) + " does not match state " +
                     to_string(state.u.shape()));
  }
  const auto& kt = simd::kernels<T>();
  const std::size_t n = current.numel();

  Tensor<T> u = Tensor<T>::zeros(current.shape());
  kt.membrane_update(state.u.data().data(), state.s_prev.data().data(), current.data().data(),
                     u.mutable_data().data(), n);
  u = record<T>("if_integrate", u, {state.u, state.s_prev, current},
                [n](const TapeNode<T>& node, BackwardContext<T>& ctx) {
    T* gu = ctx.needs(0) ? ctx.grad_in[0].data() : nullptr;
    T* gs = ctx.needs(1) ? ctx.grad_in[1].data() : nullptr;
    T* gc = ctx.needs(2) ? ctx.grad_in[2].data() : nullptr;
    simd::kernels<T>().membrane_backward(node.input_data(0).data(), node.input_data(1).data(),
                                         ctx.grad_out.data(), gu, gs, gc, n);
  });

  const T th = static_cast<T>(cfg.v_threshold);
  const T alpha = static_cast<T>(cfg.surrogate_alpha);
  Tensor<T> s = Tensor<T>::zeros(current.shape());
  kt.spike(u.data().data(), th, s.mutable_data().data(), n);
  s = record<T>("if_fire", s, {u}, [th, alpha, n](const TapeNode<T>& node, BackwardContext<T>& ctx) {
    if (!ctx.needs(0)) return;
    simd::kernels<T>().spike_backward(node.input_data(0).data(), th, alpha, ctx.grad_out.data(),
                                      ctx.grad_in[0].data(), n);
  });

  state.u = u;
  state.s_prev = s;
  return s;
}

template <typename T>
Tensor<T> run_over_time(const std::function<Tensor<T>(const Tensor<T>&)>& step, const Tensor<T>& inputs) {
  if (inputs.dim() < 1 || inputs.size(0) != kTimesteps) {
    throw ShapeError("expected exactly 8 timesteps, got input " + to_string(inputs.shape()));
  }
  std::vector<Tensor<T>> outs;
  outs.reserve(kTimesteps);
  for (std::size_t t = 0; t < kTimesteps; ++t) outs.push_back(step(select(inputs, t)));
  return stack(outs);
}

template <typename T>
SpikeTrain<T> if_over_time_stepwise(const Tensor<T>& currents, const IFConfig& cfg) {
  cfg.validate();
  IFState<T> state;
  return SpikeTrain<T>::trusted(run_over_time<T>(
      [&](const Tensor<T>& c) { return if_step(state, c, cfg); }, currents));
}

// One tape node for all steps. Forward keeps every membrane value; backward
// walks time in reverse carrying dL/du and dL/ds into the previous step, the
// same rules if_step records per step.
template <typename T>
SpikeTrain<T> if_over_time(const Tensor<T>& currents, const IFConfig& cfg) {
  cfg.validate();
  if (currents.dim() < 2 || currents.size(0) != kTimesteps) {
    throw ShapeError("expected exactly 8 timesteps, got input " + to_string(currents.shape()));
  }
  const auto& kt = simd::kernels<T>();
  const std::size_t n = currents.numel() / kTimesteps;
  const T th = static_cast<T>(cfg.v_threshold);
  const T alpha = static_cast<T>(cfg.surrogate_alpha);

  auto membrane = std::make_shared<std::vector<T>>(currents.numel());
  Tensor<T> spikes = Tensor<T>::zeros(currents.shape());
  const T* c = currents.data().data();
  T* u = membrane->data();
  T* s = spikes.mutable_data().data();
  std::copy(c, c + n, u);
  kt.spike(u, th, s, n);
  for (std::size_t t = 1; t < kTimesteps; ++t) {
    kt.membrane_update(u + (t - 1) * n, s + (t - 1) * n, c + t * n, u + t * n, n);
    kt.spike(u + t * n, th, s + t * n, n);
  }

  spikes = record<T>("if_over_time", spikes, {currents},
                     [membrane, n, th, alpha](const TapeNode<T>&, BackwardContext<T>& ctx) {
    if (!ctx.needs(0)) return;
    const auto& kt = simd::kernels<T>();
    const T* u = membrane->data();
    const T* s = ctx.out.data();
    const T* g = ctx.grad_out.data();
    T* gc = ctx.grad_in[0].data();
    // carry_*: gradient reaching u[t] / s[t] from step t+1.
    std::vector<T> carry_u(n, T(0)), carry_s(n, T(0)), next_u(n), next_s(n), gu(n);
    for (std::size_t t = kTimesteps; t-- > 0;) {
      kt.axpy(T(1), g + t * n, carry_s.data(), n);
      std::copy(carry_u.begin(), carry_u.end(), gu.begin());
      kt.spike_backward(u + t * n, th, alpha, carry_s.data(), gu.data(), n);
      if (t == 0) {
        kt.axpy(T(1), gu.data(), gc, n);
        break;
      }
      std::fill(next_u.begin(), next_u.end(), T(0));
      std::fill(next_s.begin(), next_s.end(), T(0));
      kt.membrane_backward(u + (t - 1) * n, s + (t - 1) * n, gu.data(), next_u.data(), next_s.data(),
                           gc + t * n, n);
      std::swap(carry_u, next_u);
      std::swap(carry_s, next_s);
    }
  });
  return SpikeTrain<T>::trusted(spikes);
}

#define HAS8_INSTANTIATE(T)                                                                 \
  template void reset<T>(IFState<T>&);                                                      \
  template Tensor<T> if_step<T>(IFState<T>&, const Tensor<T>&, const IFConfig&);            \
  template Tensor<T> run_over_time<T>(const std::function<Tensor<T>(const Tensor<T>&)>&,    \
                                      const Tensor<T>&);                                    \
  template SpikeTrain<T> if_over_time<T>(const Tensor<T>&, const IFConfig&);                \
  template SpikeTrain<T> if_over_time_stepwise<T>(const Tensor<T>&, const IFConfig&);

HAS8_INSTANTIATE(float)
HAS8_INSTANTIATE(double)
#undef HAS8_INSTANTIATE

}  // namespace has8
