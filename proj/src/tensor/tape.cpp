#include <stdexcept>

#include "aeae/autodiff.hpp"

namespace aeae {

const Tensor& Var::value() const { return tape_->value(id_); }

Tensor Var::grad() const {
  const Tensor& g = tape_->grad_ref(id_);
  if (g.empty()) return Tensor(value().shape(), 0.0);
  return g;
}

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::leaf(Tensor value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), Tensor{}, requires_grad, {}, nullptr, "leaf"});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward,
                 const char* op) {
  bool needs = false;
  for (std::size_t in : inputs) {
    if (in >= nodes_.size()) throw std::out_of_range("tape input out of range");
    needs = needs || nodes_[in].requires_grad;
  }
  Node node{std::move(value), Tensor{}, needs, std::move(inputs), nullptr, op};
  if (needs) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::accumulate(std::size_t id) {
  Node& node = nodes_.at(id);
  if (node.grad.empty()) node.grad = Tensor(node.value.shape(), 0.0);
  return node.grad;
}

void Tape::zero_grad() {
  for (Node& node : nodes_) node.grad = Tensor{};
}

void Tape::backward(Var loss) {
  if (loss.value().size() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " +
                     shape_to_string(loss.shape()));
  }
  backward(loss, Tensor(loss.shape(), 1.0));
}

void Tape::backward(Var output, const Tensor& seed) {
  if (&output.tape() != this) throw std::invalid_argument("variable from another tape");
  require_same_shape(output.value(), seed, "backward seed");
  zero_grad();
  if (!nodes_[output.id()].requires_grad) return;
  accumulate(output.id()) = seed;
  for (std::size_t i = output.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.backward || node.grad.empty()) continue;
    node.backward(*this, i);
  }
}

}  // namespace aeae
