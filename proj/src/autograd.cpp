#include "diffo/autograd.hpp"

#include <unordered_set>

namespace diffo {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename Scalar>
Tensor<Scalar>& Node<Scalar>::grad_buffer() {
  if (grad.empty() && value.size() > 0) grad = Tensor<Scalar>::zeros(value.shape());
  if (grad.shape() != value.shape()) grad = Tensor<Scalar>::zeros(value.shape());
  return grad;
}

template <typename Scalar>
void Node<Scalar>::accumulate(const Tensor<Scalar>& g) {
  require_same_shape(g.shape(), value.shape(), "gradient accumulate");
  if (grad.empty()) {
    grad = g;
  } else {
    grad.array() += g.array();
  }
}

template <typename Scalar>
Var<Scalar>::Var(Tensor<Scalar> value, bool requires_grad)
    : node_(std::make_shared<Node<Scalar>>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

template <typename Scalar>
Tensor<Scalar> Var<Scalar>::grad() const {
  if (!has_grad()) return Tensor<Scalar>::zeros(shape());
  return node_->grad;
}

template <typename Scalar>
void Var<Scalar>::zero_grad() {
  if (node_) node_->grad = Tensor<Scalar>();
}

template <typename Scalar>
void Var<Scalar>::backward() const {
  if (!node_ || !node_->requires_grad) return;
  if (node_->value.size() != 1) throw ShapeError("backward() requires a scalar root");

  // Iterative post-order DFS gives a topological order of the graph.
  std::vector<Node<Scalar>*> order;
  std::unordered_set<Node<Scalar>*> seen;
  std::vector<std::pair<Node<Scalar>*, size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<Scalar>* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.push_back({child, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  node_->accumulate(Tensor<Scalar>::ones(node_->value.shape()));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<Scalar>* node = *it;
    if (node->backward && !node->grad.empty()) {
      node->backward(*node);
      // Interior gradients are no longer needed once pushed upstream.
      node->grad = Tensor<Scalar>();
    }
  }
}

namespace detail {

template <typename Scalar>
Var<Scalar> make_result(Tensor<Scalar> value, std::vector<Var<Scalar>> inputs,
                        std::function<void(Node<Scalar>&)> backward) {
  auto node = std::make_shared<Node<Scalar>>();
  node->value = std::move(value);
  if (g_grad_enabled) {
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (any) {
      node->requires_grad = true;
      for (const auto& in : inputs) node->inputs.push_back(in.shared());
      node->backward = std::move(backward);
    }
  }
  return Var<Scalar>(std::move(node));
}

template Var<float> make_result(Tensor<float>, std::vector<Var<float>>,
                                std::function<void(Node<float>&)>);
template Var<double> make_result(Tensor<double>, std::vector<Var<double>>,
                                 std::function<void(Node<double>&)>);

}  // namespace detail

template struct Node<float>;
template struct Node<double>;
template class Var<float>;
template class Var<double>;

}  // namespace diffo
