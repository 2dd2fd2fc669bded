#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "diffo/tensor.hpp"

namespace diffo {

/// One value in a reverse-mode tape. Nodes are created by the ops in
/// ops.hpp; a node that requires a gradient keeps its inputs alive and
/// knows how to push its own gradient back into them.
template <typename Scalar>
struct Node {
  Tensor<Scalar> value;
  Tensor<Scalar> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  /// Gradient buffer, zero-initialized on first use.
  Tensor<Scalar>& grad_buffer();
  void accumulate(const Tensor<Scalar>& g);
};

/// Shared handle to a tape node. Copies alias the same value and gradient.
template <typename Scalar>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<Scalar> value, bool requires_grad = false);
  explicit Var(std::shared_ptr<Node<Scalar>> node) : node_(std::move(node)) {}

  const Tensor<Scalar>& value() const { return node_->value; }
  /// In-place access for optimizers and checkpoint loading.
  Tensor<Scalar>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool has_grad() const { return node_ && !node_->grad.empty(); }
  /// Gradient, or zeros of the value's shape if none was accumulated.
  Tensor<Scalar> grad() const;
  void zero_grad();

  /// Reverse sweep from this scalar node (seed gradient 1).
  void backward() const;

  Node<Scalar>* node() const { return node_.get(); }
  const std::shared_ptr<Node<Scalar>>& shared() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node<Scalar>> node_;
};

/// Whether new ops record backward closures on this thread.
bool grad_enabled();

/// Disables tape recording for its lifetime (inference paths).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {

/// Builds a result node; the backward closure is attached only when some
/// input requires a gradient and recording is enabled.
template <typename Scalar>
Var<Scalar> make_result(Tensor<Scalar> value, std::vector<Var<Scalar>> inputs,
                        std::function<void(Node<Scalar>&)> backward);

}  // namespace detail

}  // namespace diffo
