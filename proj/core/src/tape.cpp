#include "hypernets/tape.hpp"

#include "hypernets/errors.hpp"

namespace hypernets {

Tensor Tape::leaf(const Tensor& value) {
  Tensor t = value.detached();
  t.tape_ = this;
  t.node_ = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{t.shape_, {}, nullptr, "leaf"});
  return t;
}

Tensor Tape::record(const Tensor& value, std::vector<int> parents, BackwardFn backward, const char* op) {
  Tensor t = value.detached();
  t.tape_ = this;
  t.node_ = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{t.shape_, std::move(parents), std::move(backward), op});
  return t;
}

void Tape::backward(const Tensor& root) {
  if (!root.recorded() || root.tape() != this) {
    throw ContractError("backward: root is not recorded on this tape");
  }
  if (root.size() != 1) {
    throw ContractError("backward: root must be scalar, got shape " + shape_str(root.shape()));
  }

  grads_.assign(nodes_.size(), {});
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    grads_[i].assign(numel(nodes_[i].shape), 0.0);
  }
  grads_[static_cast<std::size_t>(root.node())][0] = 1.0;

  // Mark reachability first so the sweep skips subgraphs that do not feed the
  // root (their gradients stay zero).
  std::vector<char> reachable(nodes_.size(), 0);
  reachable[static_cast<std::size_t>(root.node())] = 1;
  for (int i = root.node(); i >= 0; --i) {
    if (!reachable[static_cast<std::size_t>(i)]) continue;
    for (int p : nodes_[static_cast<std::size_t>(i)].parents) {
      if (p >= 0) reachable[static_cast<std::size_t>(p)] = 1;
    }
  }
  for (int i = root.node(); i >= 0; --i) {
    const Node& node = nodes_[static_cast<std::size_t>(i)];
    if (reachable[static_cast<std::size_t>(i)] && node.backward) {
      node.backward(grads_[static_cast<std::size_t>(i)], *this);
    }
  }
  swept_ = true;
}

Tensor Tape::grad(const Tensor& t) const {
  if (!swept_) throw ContractError("grad: backward() has not run on this tape");
  if (!t.recorded() || t.tape() != this) {
    throw ContractError("grad: tensor is not recorded on this tape");
  }
  const auto& g = grads_[static_cast<std::size_t>(t.node())];
  return Tensor(t.shape(), std::vector<double>(g));
}

std::vector<double>* Tape::grad_buffer(int node) {
  if (node < 0) return nullptr;
  return &grads_[static_cast<std::size_t>(node)];
}

}  // namespace hypernets
