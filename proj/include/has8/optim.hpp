#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "has8/layers.hpp"
#include "has8/tensor.hpp"

namespace has8 {

// Mean over the batch of -log softmax(logits)[label]. logits [B, K]; labels
// outside [0, K) throw ValueError.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<std::uint8_t>& labels);

template <typename T>
class Optimizer {
 public:
  explicit Optimizer(std::vector<ParamRef<T>> params);
  virtual ~Optimizer() = default;

  // Throws NonFiniteError naming the first parameter with a NaN/Inf gradient;
  // no parameter is touched in that case. Parameters without a gradient are
  // skipped.
  void step();
  void zero_grad();

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  std::uint64_t steps() const { return steps_; }

 protected:
  virtual void update(std::size_t index, std::span<T> value, std::span<const T> grad) = 0;

  std::vector<ParamRef<T>> params_;
  double lr_ = 0.0;
  std::uint64_t steps_ = 0;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Coupled L2: grad += weight_decay * theta.
  double weight_decay = 1e-3;

  void validate() const;
};

template <typename T>
class Adam : public Optimizer<T> {
 public:
  Adam(std::vector<ParamRef<T>> params, AdamConfig cfg = {});

 protected:
  void update(std::size_t index, std::span<T> value, std::span<const T> grad) override;

 private:
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::vector<std::uint64_t> t_;
};

struct SgdConfig {
  double lr = 0.1;
  double momentum = 0.9;
  bool nesterov = true;
  double weight_decay = 1e-3;

  void validate() const;
};

template <typename T>
class Sgd : public Optimizer<T> {
 public:
  Sgd(std::vector<ParamRef<T>> params, SgdConfig cfg = {});

 protected:
  void update(std::size_t index, std::span<T> value, std::span<const T> grad) override;

 private:
  SgdConfig cfg_;
  std::vector<std::vector<double>> buf_;
  std::vector<bool> started_;
};

// Cosine annealing with warm restarts. The first cycle starts at initial_lr,
// every later cycle at initial_lr / 10; each decays towards 0 over
// cycle_steps.
struct SgdrConfig {
  double initial_lr = 0.1;
  std::size_t cycle_steps = 1;
};

double sgdr_lr(std::size_t step, const SgdrConfig& cfg);
// 0.1 * batch / 256
double sgdr_initial_lr(std::size_t batch_size);

}  // namespace has8
