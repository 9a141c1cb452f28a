#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "strengthnet/common/error.hpp"

namespace strengthnet::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

/// Plain owning tensor: row-major values with a shape. Used for parameters
/// and anything stored outside a tape.
template <class T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  Tensor(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (numel(shape) != data.size()) {
      fail(ErrorCode::kShapeMismatch,
           "tensor " + shape_string(shape) + " given " + std::to_string(data.size()) + " values");
    }
  }
  static Tensor zeros(Shape s) {
    const auto n = numel(s);
    return Tensor(std::move(s), std::vector<T>(n, T(0)));
  }

  std::size_t size() const { return data.size(); }

  template <class U>
  Tensor<U> cast() const {
    return Tensor<U>(shape, std::vector<U>(data.begin(), data.end()));
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

template <class T>
class Tape;

/// One recorded value. `backward` reads `grad` and accumulates into the
/// gradients of the node's inputs.
template <class T>
struct Node {
  const char* op = "leaf";
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  std::function<void()> backward;
};

/// Lightweight handle to a node owned by a Tape. Handles become dangling
/// once the tape is cleared.
template <class T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, Node<T>* node) : tape_(tape), node_(node) {}

  bool valid() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->value.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::span<const T> value() const { return node_->value; }
  std::span<const T> grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  T item() const {
    if (size() != 1) fail(ErrorCode::kShapeMismatch, "item() on tensor of shape " + shape_string(shape()));
    return node_->value[0];
  }
  Tensor<T> to_tensor() const { return Tensor<T>(node_->shape, node_->value); }

  Tape<T>* tape() const { return tape_; }
  Node<T>* node() const { return node_; }

 private:
  Tape<T>* tape_ = nullptr;
  Node<T>* node_ = nullptr;
};

/// Records operations in execution order; `backward` replays them in reverse.
/// A tape belongs to one thread and is cleared between training steps.
template <class T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Shape shape, std::vector<T> values) {
    return leaf(std::move(shape), std::move(values), false);
  }
  Var<T> constant(const Tensor<T>& t) { return constant(t.shape, t.data); }

  Var<T> variable(Shape shape, std::vector<T> values) {
    return leaf(std::move(shape), std::move(values), true);
  }
  Var<T> variable(const Tensor<T>& t) { return variable(t.shape, t.data); }

  /// Adds an op result. `make_backward` is invoked only when some input
  /// requires a gradient; it receives the output node and returns the
  /// closure that propagates the output gradient to the inputs.
  template <class MakeBackward>
  Var<T> record(const char* op, Shape shape, std::vector<T> value, std::initializer_list<Var<T>> inputs,
                MakeBackward&& make_backward) {
    check_finite(op, value);
    if (numel(shape) != value.size()) {
      fail(ErrorCode::kShapeMismatch, std::string(op) + " produced inconsistent shape");
    }
    bool needs_grad = false;
    for (const auto& in : inputs) {
      if (in.tape() != this) fail(ErrorCode::kInvalidArgument, std::string(op) + ": input from another tape");
      needs_grad = needs_grad || in.requires_grad();
    }
    auto node = std::make_unique<Node<T>>();
    node->op = op;
    node->shape = std::move(shape);
    node->value = std::move(value);
    node->requires_grad = needs_grad;
    Node<T>* raw = node.get();
    if (needs_grad) raw->backward = make_backward(raw);
    nodes_.push_back(std::move(node));
    return Var<T>(this, raw);
  }

  /// Reverse-mode sweep from a scalar loss. Every tracked node's gradient is
  /// reset first, so parameters off the loss path end with zero gradient.
  void backward(const Var<T>& loss) {
    if (nodes_.empty()) fail(ErrorCode::kNotScalarLoss, "backward on an empty tape");
    if (loss.size() != 1) {
      fail(ErrorCode::kNotScalarLoss, "loss has shape " + shape_string(loss.shape()));
    }
    for (auto& n : nodes_) {
      if (n->requires_grad) n->grad.assign(n->value.size(), T(0));
    }
    if (!loss.requires_grad()) return;
    loss.node()->grad[0] = T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Node<T>& n = **it;
      if (n.backward) n.backward();
    }
  }

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }
  /// Nodes in recording order.
  const Node<T>& node(std::size_t i) const { return *nodes_.at(i); }

 private:
  static void check_finite(const char* op, std::span<const T> values) {
    for (const T& v : values) {
      if (!std::isfinite(v)) fail(ErrorCode::kNonFiniteValue, std::string(op) + " produced a non-finite value");
    }
  }

  Var<T> leaf(Shape shape, std::vector<T> values, bool requires_grad) {
    if (numel(shape) != values.size()) {
      fail(ErrorCode::kShapeMismatch,
           "leaf " + shape_string(shape) + " given " + std::to_string(values.size()) + " values");
    }
    check_finite("leaf", values);
    auto node = std::make_unique<Node<T>>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    Node<T>* raw = node.get();
    nodes_.push_back(std::move(node));
    return Var<T>(this, raw);
  }

  std::vector<std::unique_ptr<Node<T>>> nodes_;
};

}  // namespace strengthnet::ad
