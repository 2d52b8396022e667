#pragma once

#include <functional>
#include <vector>

#include "hypernets/tensor.hpp"

namespace hypernets {

// Reverse-mode tape, rebuilt per forward pass (define-by-run). Nodes are
// appended in execution order, so every parent precedes its children and
// backward() is a single reverse sweep. A tape and the tensors recorded on it
// are confined to one thread for the duration of a forward+backward pass.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Gradient of the node's output arrives in out_grad; the closure adds each
  // parent's contribution into tape.grad_buffer(parent).
  using BackwardFn = std::function<void(const std::vector<double>& out_grad, Tape& tape)>;

  // Registers value as a differentiable leaf (shares its storage).
  Tensor leaf(const Tensor& value);

  // Records a computed node. Called by the ops in ops.hpp.
  Tensor record(const Tensor& value, std::vector<int> parents, BackwardFn backward, const char* op);

  // Reverse sweep from a scalar root. Gradients accumulate additively at
  // fan-out; grad of the root w.r.t. itself is 1.
  void backward(const Tensor& root);

  // Gradient of t after backward(); same shape as t.
  Tensor grad(const Tensor& t) const;

  // Accumulation buffer for a node id; nullptr for constants (id < 0).
  std::vector<double>* grad_buffer(int node);

  std::size_t node_count() const { return nodes_.size(); }
  const char* op_name(int node) const { return nodes_[static_cast<std::size_t>(node)].op; }

 private:
  struct Node {
    Shape shape;
    std::vector<int> parents;
    BackwardFn backward;
    const char* op;
  };
  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
  bool swept_ = false;
};

}  // namespace hypernets
