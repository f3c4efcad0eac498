#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "prada/autodiff/tensor.hpp"

namespace prada::ad {

using NodeId = std::size_t;

class Tape;

// Handle to a value recorded on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

  bool valid() const noexcept { return tape_ != nullptr; }
  NodeId id() const noexcept { return id_; }
  Tape& tape() const noexcept { return *tape_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  NodeId id_ = 0;
};

// Leaf gradients produced by Tape::backward, keyed by node id. Leaves that
// received no gradient are absent.
using GradientMap = std::map<NodeId, Tensor>;

// Append-only record of a dynamic computation. Nodes are numbered in the order
// they are recorded, so every node's inputs carry smaller ids and reverse
// append order is a valid topological order for backward.
class Tape {
 public:
  // Called with the upstream gradient of the node being processed.
  using BackwardFn = std::function<void(Tape& tape, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  // Records an op output. The node requires grad iff any input does; the
  // backward function is dropped otherwise.
  Var record(Tensor value, std::vector<NodeId> inputs, BackwardFn backward);

  const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
  bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }
  const std::vector<NodeId>& inputs(NodeId id) const { return nodes_.at(id).inputs; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Gradient accumulator for an input, or nullptr when the input does not
  // require grad. Allocated as zeros on first use.
  Tensor* grad_sink(NodeId id);

  // Accumulated gradient of a node after backward, if any reached it.
  const Tensor* grad(NodeId id) const;

  // Reverse pass from a scalar loss. May be called once per recording; call
  // reset() before recording again.
  GradientMap backward(Var loss);

  // Visit order of the last backward pass (for tests of the ordering contract).
  const std::vector<NodeId>& last_visit_order() const noexcept { return visit_order_; }

  void reset();

 private:
  struct Node {
    Tensor value;
    std::optional<Tensor> grad;
    std::vector<NodeId> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    bool is_leaf = false;
  };

  std::vector<Node> nodes_;
  std::vector<NodeId> visit_order_;
  bool backward_done_ = false;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }
inline bool Var::requires_grad() const { return tape_->requires_grad(id_); }

}  // namespace prada::ad
