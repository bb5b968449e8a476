#pragma once

// Dense row-major tensors with an optional reverse-mode tape node.
//
// A Tensor is a shared handle: copies alias the same values, gradient and
// tape node. Values are treated as immutable once an op has produced them;
// only leaves (parameters, inputs) are written in place, by initializers and
// optimizers.

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "has8/shape.hpp"

namespace has8 {

template <typename T>
struct TensorImpl;

template <typename T>
struct BackwardContext {
  std::span<const T> grad_out;
  std::span<const T> out;
  // One entry per node input; empty when that input needs no gradient.
  // Backward rules accumulate (+=) into these.
  std::vector<std::span<T>> grad_in;

  bool needs(std::size_t input) const { return grad_in[input].data() != nullptr; }
};

template <typename T>
struct TapeNode {
  std::string op;
  std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
  std::function<void(const TapeNode&, BackwardContext<T>&)> backward;
  bool consumed = false;

  std::span<const T> input_data(std::size_t i) const;
  const Shape& input_shape(std::size_t i) const;
};

template <typename T>
struct TensorImpl {
  Shape shape;
  std::shared_ptr<std::vector<T>> storage;
  bool requires_grad = false;
  std::vector<T> grad;  // empty == no gradient
  std::shared_ptr<TapeNode<T>> node;
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);
  // Shares `storage`; used by views such as reshape.
  static Tensor wrap(Shape shape, std::shared_ptr<std::vector<T>> storage);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t dim() const { return impl_->shape.size(); }
  std::size_t size(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t numel() const { return impl_->storage->size(); }

  std::span<const T> data() const { return {impl_->storage->data(), impl_->storage->size()}; }
  std::span<T> mutable_data() { return {impl_->storage->data(), impl_->storage->size()}; }
  T item() const;
  T at(std::size_t flat_index) const { return (*impl_->storage).at(flat_index); }

  bool requires_grad() const { return impl_->requires_grad; }
  // Leaves only.
  Tensor& set_requires_grad(bool flag);
  bool is_leaf() const { return impl_->node == nullptr; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const T> grad_data() const { return impl_->grad; }
  std::span<T> mutable_grad() { return impl_->grad; }
  // Copy of the gradient as a tensor; zeros when absent.
  Tensor grad() const;
  void zero_grad() { impl_->grad.clear(); }

  const std::shared_ptr<TapeNode<T>>& node() const { return impl_->node; }
  const std::shared_ptr<TensorImpl<T>>& impl() const { return impl_; }

  // Same values, no tape history, no grad requirement.
  Tensor detach() const;
  // Deep copy of the values.
  Tensor clone() const;

 private:
  explicit Tensor(std::shared_ptr<TensorImpl<T>> impl) : impl_(std::move(impl)) {}
  template <typename U>
  friend Tensor<U> make_tensor(std::shared_ptr<TensorImpl<U>> impl);

  std::shared_ptr<TensorImpl<T>> impl_;
};

template <typename T>
Tensor<T> make_tensor(std::shared_ptr<TensorImpl<T>> impl) {
  return Tensor<T>(std::move(impl));
}

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace has8
