#include "prada/autodiff/tape.hpp"

#include "prada/util/error.hpp"

namespace prada::ad {

Var Tape::leaf(Tensor value, bool requires_grad) {
  if (backward_done_) throw ContractError("tape already consumed by backward(); call reset() first");
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  node.is_leaf = true;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<NodeId> inputs, BackwardFn backward) {
  if (backward_done_) throw ContractError("tape already consumed by backward(); call reset() first");
  Node node;
  node.value = std::move(value);
  for (NodeId in : inputs) {
    if (in >= nodes_.size()) throw ContractError("op input refers to a node not on this tape");
    node.requires_grad = node.requires_grad || nodes_[in].requires_grad;
  }
  node.inputs = std::move(inputs);
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Tensor* Tape::grad_sink(NodeId id) {
  Node& node = nodes_.at(id);
  if (!node.requires_grad) return nullptr;
  if (!node.grad) node.grad.emplace(node.value.shape(), 0.0);
  return &*node.grad;
}

const Tensor* Tape::grad(NodeId id) const {
  const Node& node = nodes_.at(id);
  return node.grad ? &*node.grad : nullptr;
}

GradientMap Tape::backward(Var loss) {
  if (backward_done_) throw ContractError("backward() called twice on the same tape without reset()");
  if (&loss.tape() != this) throw ContractError("loss belongs to a different tape");
  if (loss.value().size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_string(loss.value().shape()));
  }
  backward_done_ = true;
  visit_order_.clear();

  GradientMap out;
  if (!nodes_[loss.id()].requires_grad) return out;
  nodes_[loss.id()].grad.emplace(nodes_[loss.id()].value.shape(), 1.0);

  for (NodeId id = loss.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.grad) continue;
    visit_order_.push_back(id);
    // Callbacks only write into grads of earlier nodes; nodes_ is not resized.
    if (node.backward) node.backward(*this, *node.grad);
  }
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    Node& node = nodes_[id];
    if (node.is_leaf && node.requires_grad && node.grad) out.emplace(id, *node.grad);
  }
  return out;
}

void Tape::reset() {
  nodes_.clear();
  visit_order_.clear();
  backward_done_ = false;
}

}  // namespace prada::ad
