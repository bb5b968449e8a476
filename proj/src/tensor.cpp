#include "has8/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "has8/errors.hpp"

namespace has8 {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != 0) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Shape broadcast_shapes(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("shapes " + to_string(a) + " and " + to_string(b) +
                       " are not broadcast-compatible");
    }
    out[i] = da == 1 ? db : da;
  }
  return out;
}

template <typename T>
std::span<const T> TapeNode<T>::input_data(std::size_t i) const {
  const auto& storage = *inputs[i]->storage;
  return {storage.data(), storage.size()};
}

template <typename T>
const Shape& TapeNode<T>::input_shape(std::size_t i) const {
  return inputs[i]->shape;
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values, bool requires_grad) {
  if (has8::numel(shape) != values.size()) {
    throw ShapeError("shape " + to_string(shape) + " holds " +
                     std::to_string(has8::numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  impl_ = std::make_shared<TensorImpl<T>>();
  impl_->shape = std::move(shape);
  impl_->storage = std::make_shared<std::vector<T>>(std::move(values));
  impl_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const std::size_t n = has8::numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<T>{value}, requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::wrap(Shape shape, std::shared_ptr<std::vector<T>> storage) {
  if (has8::numel(shape) != storage->size()) {
    throw ShapeError("cannot view " + std::to_string(storage->size()) +
                     " values as " + to_string(shape));
  }
  auto impl = std::make_shared<TensorImpl<T>>();
  impl->shape = std::move(shape);
  impl->storage = std::move(storage);
  return Tensor(std::move(impl));
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) {
    throw ShapeError("item() needs a single-element tensor, got " + to_string(shape()));
  }
  return (*impl_->storage)[0];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool flag) {
  if (!is_leaf()) throw AutogradError("requires_grad can only be set on leaf tensors");
  impl_->requires_grad = flag;
  return *this;
}

template <typename T>
Tensor<T> Tensor<T>::grad() const {
  if (!has_grad()) return zeros(shape());
  return Tensor(shape(), impl_->grad);
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return wrap(shape(), impl_->storage);
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  return Tensor(shape(), *impl_->storage);
}

template struct TapeNode<float>;
template struct TapeNode<double>;
template class Tensor<float>;
template class Tensor<double>;

}  // namespace has8
