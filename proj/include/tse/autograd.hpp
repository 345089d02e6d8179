// Copyright 2026 The tse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Minimal reverse-mode automatic differentiation over dense row-major
// matrices. Every feature map in the toolkit is a [frames x channels] matrix,
// so a 2-D tape is all the networks need.

#pragma once

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace tse {

using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

namespace detail {
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode(); }

// Disables graph recording for the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode()) {
    detail::grad_mode() = false;
  }
  ~NoGradGuard() { detail::grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the inputs' grads.
  std::function<void(Node&)> backward;

  template <typename Derived>
  void accumulate(const Eigen::MatrixBase<Derived>& g) {
    if (grad.size() == 0) {
      grad = g;
    } else {
      grad += g;
    }
  }

  bool input_needs_grad(std::size_t i) const {
    return inputs[i]->requires_grad;
  }
};

class Var {
 public:
  Var() = default;
  explicit Var(Matrix value, bool requires_grad = false)
      : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var scalar(double v) {
    Matrix m(1, 1);
    m(0, 0) = v;
    return Var(std::move(m));
  }

  bool defined() const { return node_ != nullptr; }
  const Matrix& value() const { return node_->value; }
  // Direct access for optimizers and finite-difference probes.
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  bool has_grad() const { return node_->grad.size() != 0; }
  bool requires_grad() const { return node_->requires_grad; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double item() const {
    if (rows() != 1 || cols() != 1) {
      throw std::logic_error("item() on a non-scalar Var");
    }
    return node_->value(0, 0);
  }
  void zero_grad() { node_->grad.resize(0, 0); }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Records an operation result. Inputs that do not require gradients are still
// linked so that backward closures can read their values.
inline Var make_op(Matrix value, std::vector<Var> inputs,
                   std::function<void(Node&)> backward) {
  bool needs_grad = false;
  if (grad_enabled()) {
    for (const auto& in : inputs) needs_grad = needs_grad || in.requires_grad();
  }
  if (!needs_grad) return Var(std::move(value));
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  node->inputs.reserve(inputs.size());
  for (auto& in : inputs) node->inputs.push_back(in.node());
  node->backward = std::move(backward);
  return Var(std::move(node));
}

// Back-propagates from a scalar root, accumulating into every reachable node
// that requires a gradient.
inline void backward(const Var& root, double seed = 1.0) {
  if (root.rows() != 1 || root.cols() != 1) {
    throw std::logic_error("backward() requires a scalar root");
  }
  if (!root.requires_grad()) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  Matrix s(1, 1);
  s(0, 0) = seed;
  root.node()->accumulate(s);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && node->grad.size() != 0) node->backward(*node);
  }
}

}  // namespace tse
