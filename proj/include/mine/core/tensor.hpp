#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mine/core/array.hpp"

namespace mine {

namespace detail {

// One vertex of the recorded computation graph.
struct Node {
  Array value;
  Array grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into inputs' grads.
  std::function<void(Node&)> backward_fn;

  Array& ensure_grad();
};

}  // namespace detail

// Handle to a value in the autodiff graph. Copies share storage; use
// Tensor(value.value()) to take an untracked copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Array value, bool requires_grad = false);

  static Tensor parameter(Array value) { return Tensor(std::move(value), true); }

  bool defined() const { return node_ != nullptr; }
  const Array& value() const { return node_->value; }
  // In-place writes are only meaningful on leaves (parameters, inputs).
  Array& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t size() const { return node_->value.size(); }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  double item() const;

  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool has_grad() const { return node_ && !node_->grad.empty(); }
  const Array& grad() const;
  void zero_grad() const;

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }
  const detail::Node* id() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  friend Tensor record(Array value, std::vector<Tensor> inputs,
                       std::function<void(detail::Node&)> backward_fn);

  std::shared_ptr<detail::Node> node_;
};

// Named trainable tensor. Two Parameters alias only when a model shares a
// Tensor explicitly between components.
struct Parameter {
  std::string name;
  Tensor tensor;
};

// Builds an op result; the graph edge is kept only when gradient recording is
// on and some input requires a gradient.
Tensor record(Array value, std::vector<Tensor> inputs,
              std::function<void(detail::Node&)> backward_fn);

// Reverse-mode sweep from a scalar. Leaf gradients accumulate across calls
// until zero_grads(); intermediate gradients are recomputed each call.
void backward(const Tensor& loss);
void zero_grads(std::span<const Parameter> params);

bool grad_enabled();

// Disables graph recording on this thread for its lifetime (inference).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace mine
