#include "has8/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <unordered_set>
#include <utility>

#include "has8/errors.hpp"

namespace has8 {
namespace {

thread_local bool g_grad_enabled = true;
thread_local bool g_anomaly = false;

template <typename T>
void check_finite(std::string_view op, std::span<const T> values) {
  for (const T v : values) {
    if (!std::isfinite(v)) {
      throw NonFiniteError("non-finite value produced by op '" + std::string(op) + "'");
    }
  }
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool anomaly_detection() { return g_anomaly; }
void set_anomaly_detection(bool enabled) { g_anomaly = enabled; }

template <typename T>
Tensor<T> record(std::string_view op, Tensor<T> out,
                 const std::vector<Tensor<T>>& inputs, BackwardFn<T> backward) {
  if (g_anomaly) check_finite<T>(op, out.data());
  if (!g_grad_enabled) return out;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor<T>& t) { return t.requires_grad(); });
  if (!any) return out;
  auto node = std::make_shared<TapeNode<T>>();
  node->op = std::string(op);
  node->inputs.reserve(inputs.size());
  for (const auto& t : inputs) node->inputs.push_back(t.impl());
  node->backward = std::move(backward);
  out.impl()->requires_grad = true;
  out.impl()->node = std::move(node);
  return out;
}

template <typename T>
BackwardStats backward(const Tensor<T>& loss) {
  if (loss.numel() != 1) {
    throw AutogradError("backward() needs a scalar loss, got shape " +
                        to_string(loss.shape()));
  }
  BackwardStats stats;
  auto root = loss.impl();
  if (!root->node) {
    if (!root->requires_grad) {
      throw AutogradError("loss does not require grad; nothing to differentiate");
    }
    if (root->grad.empty()) root->grad.assign(1, T(0));
    root->grad[0] += T(1);
    return stats;
  }
  if (root->node->consumed) {
    throw AutogradError("tape already consumed by a previous backward()");
  }

  // Post-order DFS over impls carrying a node; reversed it is a topological
  // order from the loss towards the leaves. The order owns its impls because
  // clearing a node's inputs may drop the last other reference.
  std::vector<std::shared_ptr<TensorImpl<T>>> order;
  std::unordered_set<TensorImpl<T>*> seen;
  std::vector<std::pair<std::shared_ptr<TensorImpl<T>>, std::size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& top = stack.back();
    auto& node = *top.first->node;
    if (node.consumed) {
      throw AutogradError("graph reaches a tape node ('" + node.op +
                          "') consumed by a previous backward()");
    }
    if (top.second < node.inputs.size()) {
      const auto& child = node.inputs[top.second++];
      if (child->node && seen.insert(child.get()).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(std::move(top.first));
      stack.pop_back();
    }
  }

  root->grad.assign(1, T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl<T>* impl = it->get();
    auto& node = *impl->node;
    BackwardContext<T> ctx;
    ctx.grad_out = impl->grad;
    ctx.out = std::span<const T>(impl->storage->data(), impl->storage->size());
    ctx.grad_in.resize(node.inputs.size());
    for (std::size_t i = 0; i < node.inputs.size(); ++i) {
      auto& in = *node.inputs[i];
      if (!in.requires_grad) continue;
      if (in.grad.empty()) in.grad.assign(in.storage->size(), T(0));
      ctx.grad_in[i] = in.grad;
    }
    if (!impl->grad.empty()) {
      node.backward(node, ctx);
      ++stats.nodes_visited;
    }
    node.backward = nullptr;
    node.inputs.clear();
    node.consumed = true;
    if (impl != root.get()) {
      impl->grad.clear();
      impl->grad.shrink_to_fit();
    }
    it->reset();
  }
  return stats;
}

template <typename T>
Tensor<T> apply(const CustomFunction<T>& fn, const Tensor<T>& input) {
  auto saved = std::make_shared<std::vector<Tensor<T>>>();
  Tensor<T> out;
  {
    NoGradGuard guard;
    out = fn.forward(input.detach(), *saved);
  }
  // The forward may hand back a view of its input; give the output its own
  // impl so the tape node attaches to it alone.
  out = Tensor<T>::wrap(out.shape(), out.impl()->storage);
  auto rule = fn.backward;
  const std::string name = fn.name;
  const Shape out_shape = out.shape();
  return record<T>(fn.name, out, {input},
                   [saved, rule, name, out_shape](const TapeNode<T>& node, BackwardContext<T>& ctx) {
                     if (!ctx.needs(0)) return;
                     Tensor<T> grad_out(out_shape,
                                        std::vector<T>(ctx.grad_out.begin(), ctx.grad_out.end()));
                     const Tensor<T> grad_in = rule(*saved, grad_out);
                     if (!grad_in.defined() || grad_in.shape() != node.input_shape(0)) {
                       throw AutogradError(
                           "custom op '" + name + "' backward returned shape " +
                           (grad_in.defined() ? to_string(grad_in.shape()) : "<none>") +
                           ", expected " + to_string(node.input_shape(0)));
                     }
                     auto dst = ctx.grad_in[0];
                     const auto src = grad_in.data();
                     for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
                   });
}

#define HAS8_INSTANTIATE(T)                                                     \
  template Tensor<T> record<T>(std::string_view, Tensor<T>,                     \
                               const std::vector<Tensor<T>>&, BackwardFn<T>);   \
  template BackwardStats backward<T>(const Tensor<T>&);                         \
  template Tensor<T> apply<T>(const CustomFunction<T>&, const Tensor<T>&);

HAS8_INSTANTIATE(float)
HAS8_INSTANTIATE(double)
#undef HAS8_INSTANTIATE

}  // namespace has8
