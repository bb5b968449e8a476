#include "has8/optim.hpp"

#include <cmath>
#include <numbers>

#include "has8/autograd.hpp"
#include "has8/errors.hpp"

namespace has8 {

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<std::uint8_t>& labels) {
  if (logits.dim() != 2) throw ShapeError("cross_entropy expects logits [B,K], got " + to_string(logits.shape()));
  const std::size_t batch = logits.size(0), classes = logits.size(1);
  if (labels.size() != batch) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                     std::to_string(batch));
  }
  for (std::size_t i = 0; i < batch; ++i) {
    if (labels[i] >= classes) {
      throw ValueError("label " + std::to_string(labels[i]) + " at index " + std::to_string(i) +
                       " is outside [0," + std::to_string(classes) + ")");
    }
  }
  const auto z = logits.data();
  auto probs = std::make_shared<std::vector<T>>(batch * classes);
  double loss = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    const T* row = z.data() + i * classes;
    double mx = row[0];
    for (std::size_t j = 1; j < classes; ++j) mx = std::max<double>(mx, row[j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < classes; ++j) denom += std::exp(row[j] - mx);
    const double log_denom = std::log(denom);
    for (std::size_t j = 0; j < classes; ++j) {
      (*probs)[i * classes + j] = static_cast<T>(std::exp(row[j] - mx - log_denom));
    }
    loss -= row[labels[i]] - mx - log_denom;
  }
  loss /= static_cast<double>(batch);

  return record<T>("cross_entropy", Tensor<T>::scalar(static_cast<T>(loss)), {logits},
                   [probs, labels, batch, classes](const TapeNode<T>&, BackwardContext<T>& ctx) {
    if (!ctx.needs(0)) return;
    const T scale = ctx.grad_out[0] / static_cast<T>(batch);
    auto g = ctx.grad_in[0];
    for (std::size_t i = 0; i < batch; ++i) {
      for (std::size_t j = 0; j < classes; ++j) {
        const T onehot = j == labels[i] ? T(1) : T(0);
        g[i * classes + j] += scale * ((*probs)[i * classes + j] - onehot);
      }
    }
  });
}

template <typename T>
Optimizer<T>::Optimizer(std::vector<ParamRef<T>> params) {
  for (auto& p : params) {
    if (p.trainable) params_.push_back(p);
  }
}

template <typename T>
void Optimizer<T>::step() {
  for (const auto& p : params_) {
    for (const T g : p.tensor->grad_data()) {
      if (!std::isfinite(g)) throw NonFiniteError("non-finite gradient in parameter '" + p.name + "'");
    }
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor<T>& t = *params_[i].tensor;
    if (!t.has_grad()) continue;
    update(i, t.mutable_data(), t.grad_data());
  }
  ++steps_;
}

template <typename T>
void Optimizer<T>::zero_grad() {
  for (auto& p : params_) p.tensor->zero_grad();
}

void AdamConfig::validate() const {
  if (!(lr > 0.0)) throw ValueError("adam lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ValueError("adam betas must lie in [0,1)");
  }
  if (!(eps > 0.0)) throw ValueError("adam eps must be positive");
  if (!(weight_decay >= 0.0)) throw ValueError("weight decay must be non-negative");
}

template <typename T>
Adam<T>::Adam(std::vector<ParamRef<T>> params, AdamConfig cfg) : Optimizer<T>(std::move(params)), cfg_(cfg) {
  cfg_.validate();
  this->lr_ = cfg_.lr;
  for (const auto& p : this->params_) {
    m_.emplace_back(p.tensor->numel(), 0.0);
    v_.emplace_back(p.tensor->numel(), 0.0);
  }
  t_.assign(this->params_.size(), 0);
}

template <typename T>
void Adam<T>::update(std::size_t index, std::span<T> value, std::span<const T> grad) {
  auto& m = m_[index];
  auto& v = v_[index];
  const std::uint64_t t = ++t_[index];
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t));
  const double step = this->lr_ / c1;
  const double root_c2 = std::sqrt(c2);
  for (std::size_t i = 0; i < value.size(); ++i) {
    const double g = static_cast<double>(grad[i]) + cfg_.weight_decay * value[i];
    m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
    v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
    value[i] = static_cast<T>(value[i] - step * m[i] / (std::sqrt(v[i]) / root_c2 + cfg_.eps));
  }
}

void SgdConfig::validate() const {
  if (!(lr > 0.0)) throw ValueError("sgd lr must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ValueError("sgd momentum must lie in [0,1)");
  if (!(weight_decay >= 0.0)) throw ValueError("weight decay must be non-negative");
}

template <typename T>
Sgd<T>::Sgd(std::vector<ParamRef<T>> params, SgdConfig cfg) : Optimizer<T>(std::move(params)), cfg_(cfg) {
  cfg_.validate();
  this->lr_ = cfg_.lr;
  for (const auto& p : this->params_) buf_.emplace_back(p.tensor->numel(), 0.0);
  started_.assign(this->params_.size(), false);
}

template <typename T>
void Sgd<T>::update(std::size_t index, std::span<T> value, std::span<const T> grad) {
  auto& buf = buf_[index];
  const bool first = !started_[index];
  started_[index] = true;
  for (std::size_t i = 0; i < value.size(); ++i) {
    const double g = static_cast<double>(grad[i]) + cfg_.weight_decay * value[i];
    buf[i] = first ? g : cfg_.momentum * buf[i] + g;
    const double d = cfg_.nesterov ? g + cfg_.momentum * buf[i] : buf[i];
    value[i] = static_cast<T>(value[i] - this->lr_ * d);
  }
}

double sgdr_lr(std::size_t step, const SgdrConfig& cfg) {
  if (cfg.cycle_steps == 0) throw ValueError("sgdr cycle length must be positive");
  const std::size_t cycle = step / cfg.cycle_steps;
  const double pos = static_cast<double>(step % cfg.cycle_steps) / static_cast<double>(cfg.cycle_steps);
  const double start = cycle == 0 ? cfg.initial_lr : cfg.initial_lr / 10.0;
  return 0.5 * start * (1.0 + std::cos(std::numbers::pi * pos));
}

double sgdr_initial_lr(std::size_t batch_size) { return 0.1 * static_cast<double>(batch_size) / 256.0; }

#define HAS8_INSTANTIATE(T)                                                                \
  template Tensor<T> cross_entropy<T>(const Tensor<T>&, const std::vector<std::uint8_t>&); \
  template class Optimizer<T>;                                                             \
  template class Adam<T>;                                                                  \
  template class Sgd<T>;

HAS8_INSTANTIATE(float)
HAS8_INSTANTIATE(double)
#undef HAS8_INSTANTIATE

}  // namespace has8
