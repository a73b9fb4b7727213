#include "ptnet/tape.hpp"

#include <string>

namespace ptnet {

Var Tape::leaf(Tensor value, bool requires_grad) {
  if (!value.all_finite()) throw NonFiniteError("leaf value holds NaN/Inf");
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(std::string_view op, Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  if (!value.all_finite()) throw NonFiniteError(std::string(op) + ": non-finite result");
  bool needs = false;
  for (const auto& in : inputs) {
    if (in.tape != this) throw std::invalid_argument(std::string(op) + ": input recorded on another tape");
    needs = needs || nodes_.at(in.id).requires_grad;
  }
  Node node;
  node.value = std::move(value);
  node.requires_grad = needs;
  if (needs) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Tensor* Tape::grad_sink(const Var& v) {
  Node& node = nodes_.at(v.id);
  if (!node.requires_grad) return nullptr;
  if (!node.has_grad) {
    node.grad = Tensor(node.value.shape(), 0.0);
    node.has_grad = true;
  }
  return &node.grad;
}

const Tensor* Tape::grad(const Var& v) const {
  const Node& node = nodes_.at(v.id);
  return node.has_grad ? &node.grad : nullptr;
}

void Tape::backward(const Var& loss) {
  if (loss.tape != this) throw std::invalid_argument("backward: loss recorded on another tape");
  Node& root = nodes_.at(loss.id);
  if (root.value.size() != 1) throw ShapeError("backward: loss must be scalar, got " + shape_str(root.value.shape()));
  if (!root.requires_grad) throw std::logic_error("backward: loss is detached from every differentiable input");
  grad_sink(loss)->fill(1.0);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.has_grad || !node.backward) continue;
    node.backward(*this, node.grad, node.value);
  }
}

}  // namespace ptnet
