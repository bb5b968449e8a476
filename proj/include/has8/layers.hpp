#pragma once

// Parameterized layers. A Module owns its tensors; the optimizer and the
// checkpoint code reach them through collect().

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "has8/codec.hpp"
#include "has8/neuron.hpp"
#include "has8/ops.hpp"
#include "has8/tensor.hpp"

namespace has8 {

template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* tensor;
  bool trainable;  // false for running statistics
};

template <typename T>
class Module {
 public:
  virtual ~Module() = default;

  virtual Tensor<T> forward(const Tensor<T>& x) = 0;
  virtual std::string kind() const = 0;
  // Layers carrying state across calls (IF neurons) cannot be folded over
  // time by apply_per_timestep.
  virtual bool stateful() const { return false; }

  virtual void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    (void)prefix;
    (void)out;
  }
  virtual void set_training(bool on) { training_ = on; }
  bool training() const { return training_; }

  // Shape propagation; throws ShapeError on incompatible input.
  virtual Shape output_shape(const Shape& in) const = 0;
  // Multiply-accumulates for an input of shape `in` (batch included).
  virtual std::uint64_t macs(const Shape& in) const {
    (void)in;
    return 0;
  }

 protected:
  bool training_ = true;
};

using Rng = std::mt19937_64;

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)), the Kaiming-uniform bound with
// negative slope sqrt(5).
template <typename T>
void kaiming_uniform(Tensor<T>& weight, std::size_t fan_in, Rng& rng);

template <typename T>
class Conv2d : public Module<T> {
 public:
  Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, Conv2dParams params,
         bool bias, Rng& rng);

  Tensor<T> forward(const Tensor<T>& x) override;
  std::string kind() const override { return "conv2d"; }
  void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) override;
  Shape output_shape(const Shape& in) const override;
  std::uint64_t macs(const Shape& in) const override;

  Tensor<T> weight;
  std::optional<Tensor<T>> bias;
  Conv2dParams params;
};

template <typename T>
class Linear : public Module<T> {
 public:
  Linear(std::size_t in_features, std::size_t out_features, bool bias, Rng& rng);

  Tensor<T> forward(const Tensor<T>& x) override;
  std::string kind() const override { return "linear"; }
  void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) override;
  Shape output_shape(const Shape& in) const override;
  std::uint64_t macs(const Shape& in) const override;

  Tensor<T> weight;
  std::optional<Tensor<T>> bias;
};

template <typename T>
class BatchNorm : public Module<T> {
 public:
  explicit BatchNorm(std::size_t channels, double momentum = 0.1, double eps = 1e-5);

  Tensor<T> forward(const Tensor<T>& x) override;
  std::string kind() const override { return "batch_norm"; }
  void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) override;
  Shape output_shape(const Shape& in) const override;

  Tensor<T> gamma, beta, running_mean, running_var;
  double momentum, eps;
};

template <typename T>
class MaxPool2d : public Module<T> {
 public:
  explicit MaxPool2d(std::size_t window = 2) : window(window) {}

  Tensor<T> forward(const Tensor<T>& x) override { return maxpool2d(x, window); }
  std::string kind() const override { return "maxpool2d"; }
  Shape output_shape(const Shape& in) const override;

  std::size_t window;
};

template <typename T>
class Flatten : public Module<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override { return flatten(x); }
  std::string kind() const override { return "flatten"; }
  Shape output_shape(const Shape& in) const override;
};

template <typename T>
class ReLU : public Module<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override { return relu(x); }
  std::string kind() const override { return "relu"; }
  Shape output_shape(const Shape& in) const override { return in; }
};

// IF neurons over a [T, batch, ...] current sequence; state is reset on every
// call.
template <typename T>
class IFNeuron : public Module<T> {
 public:
  explicit IFNeuron(IFConfig cfg = {}) : cfg(cfg) { cfg.validate(); }

  Tensor<T> forward(const Tensor<T>& x) override { return if_over_time(x, cfg).tensor(); }
  std::string kind() const override { return "if_neuron"; }
  bool stateful() const override { return true; }
  Shape output_shape(const Shape& in) const override { return in; }

  IFConfig cfg;
};

// Runs a stateless layer on every step of a [T, batch, ...] tensor by folding
// time into the batch axis, so weights are shared and batch norm sees joint
// (time x batch) statistics. Throws std::invalid_argument for stateful layers.
template <typename T>
Tensor<T> apply_per_timestep(Module<T>& layer, const Tensor<T>& steps);

}  // namespace has8
