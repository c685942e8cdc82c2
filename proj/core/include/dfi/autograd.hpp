#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "dfi/tensor.hpp"

namespace dfi {

// One vertex of the reverse-mode tape. `backward_fn` reads `grad` (the
// upstream gradient of this node) and accumulates into its inputs' grads.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  Tensor& grad_buffer();
};

// Handle to a tape node. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var leaf(Tensor value, bool requires_grad);
  static Var constant(Tensor value) { return leaf(std::move(value), false); }

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  int64_t dim(std::size_t axis) const { return node_->value.dim(axis); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }
  // Empty tensor when no gradient has reached this node yet.
  const Tensor& grad() const { return node_->grad; }
  void zero_grad() { node_->grad = Tensor(); }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Result node for an op. The tape edge is recorded only when gradient mode is
// on and at least one input requires a gradient.
Var make_op_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward_fn);

// Runs reverse accumulation from a scalar root. Leaf gradients accumulate
// across calls until cleared with Var::zero_grad.
void backward(const Var& root, double seed = 1.0);

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace dfi
