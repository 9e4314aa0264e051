#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "essnet/tensor.hpp"

namespace essnet {

/// One value in a dynamically recorded computation graph.
template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  /// Reads this node's grad and accumulates into its parents' grads.
  std::function<void(Node&)> backward;

  /// Gradient buffer, zero-initialised on first use.
  Tensor<T>& grad_buffer() {
    if (grad.shape() != value.shape() || grad.empty())
      grad = Tensor<T>(value.shape());
    return grad;
  }
  bool has_grad() const { return !grad.empty(); }
};

template <typename T>
using Var = std::shared_ptr<Node<T>>;

template <typename T>
Var<T> constant(Tensor<T> value) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  return node;
}

template <typename T>
Var<T> parameter(Tensor<T> value) {
  auto node = constant(std::move(value));
  node->requires_grad = true;
  return node;
}

namespace detail {
inline thread_local bool grad_enabled = true;
}

/// While alive, ops record no graph (inference).
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_enabled) { detail::grad_enabled = false; }
  ~NoGradGuard() { detail::grad_enabled = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Records an op result. If no parent needs a gradient the node is a
/// plain constant and the backward closure is dropped.
template <typename T>
Var<T> record(Tensor<T> value, std::vector<Var<T>> parents,
              std::function<void(Node<T>&)> backward) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  if (!detail::grad_enabled) return node;
  for (const auto& p : parents) node->requires_grad |= p->requires_grad;
  if (node->requires_grad) {
    node->parents = std::move(parents);
    node->backward = std::move(backward);
  }
  return node;
}

/// Same value, cut from the graph.
template <typename T>
Var<T> detach(const Var<T>& v) {
  return constant(v->value);
}

/// Reverse-mode sweep from a scalar root. Gradients accumulate into every
/// reachable node with requires_grad, including parameters.
template <typename T>
void backward(const Var<T>& root);

}  // namespace essnet
