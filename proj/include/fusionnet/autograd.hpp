#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fusionnet/tensor.hpp"

namespace fusionnet {

template <typename T>
class Tape;

/// Learnable tensor with a unique dotted identifier such as "down1.res.conv2.weight".
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  std::optional<Tensor<T>> grad;

  void zero_grad() {
    if (grad) grad->fill(T{0});
    else grad.emplace(value.shape());
  }
};

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // empty until some consumer contributes
  bool requires_grad = false;
  Tape<T>* tape = nullptr;
  std::function<void(Node&)> backward;

  Tensor<T>& grad_buffer() {
    if (grad.empty() && !value.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
  bool has_grad() const { return !grad.empty(); }
};

/// Handle to a value produced by an engine op. Cheap to copy; the value is immutable.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  const Tensor<T>& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  Tape<T>* tape() const { return node_->tape; }
  bool requires_grad() const { return node_->requires_grad; }
  bool valid() const { return static_cast<bool>(node_); }

  /// Gradient accumulated by the last backward pass; zeros if unreached.
  Tensor<T> grad() const {
    return node_->has_grad() ? node_->grad : Tensor<T>(node_->value.shape());
  }

  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Untracked value. Ops on constants alone record nothing.
template <typename T>
Var<T> constant(Tensor<T> value) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  return Var<T>(std::move(node));
}

/// Ordered record of executed ops. Backward replays it in exact reverse order.
template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> leaf(Tensor<T> value, bool requires_grad = true) {
    auto node = std::make_shared<Node<T>>();
    node->value = std::move(value);
    node->requires_grad = requires_grad;
    node->tape = this;
    nodes_.push_back(node);
    return Var<T>(std::move(node));
  }

  /// Snapshot of a parameter; backward adds the node gradient into `p.grad`.
  Var<T> parameter(Parameter<T>& p) {
    if (!p.grad) p.grad.emplace(p.value.shape());
    auto node = std::make_shared<Node<T>>();
    node->value = p.value;
    node->requires_grad = true;
    node->tape = this;
    Parameter<T>* target = &p;
    node->backward = [target](Node<T>& self) {
      auto& g = *target->grad;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    };
    nodes_.push_back(node);
    return Var<T>(std::move(node));
  }

  std::size_t size() const { return nodes_.size(); }

  void record(std::shared_ptr<Node<T>> node) { nodes_.push_back(std::move(node)); }

  void backward(const Var<T>& loss) {
    if (!loss.valid() || loss.tape() != this) {
      throw std::invalid_argument("backward: loss was not recorded on this tape");
    }
    if (loss.value().size() != 1) {
      throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                  loss.shape().to_string());
    }
    loss.node()->grad_buffer()[0] += T{1};
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Node<T>& node = **it;
      if (node.backward && node.has_grad()) node.backward(node);
    }
  }

 private:
  std::vector<std::shared_ptr<Node<T>>> nodes_;
};

namespace detail {

/// Builds the output node of an op; records it when any input lives on a tape.
template <typename T>
Var<T> make_result(Tensor<T> value, std::initializer_list<const Var<T>*> inputs,
                   std::function<void(Node<T>&)> backward) {
  Tape<T>* tape = nullptr;
  bool requires_grad = false;
  for (const Var<T>* in : inputs) {
    if (in->tape()) {
      if (tape && tape != in->tape()) throw std::invalid_argument("inputs recorded on different tapes");
      tape = in->tape();
    }
    requires_grad = requires_grad || in->requires_grad();
  }
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->tape = tape;
  node->requires_grad = requires_grad && tape != nullptr;
  if (node->requires_grad) {
    node->backward = std::move(backward);
    tape->record(node);
  }
  return Var<T>(std::move(node));
}

}  // namespace detail

}  // namespace fusionnet
