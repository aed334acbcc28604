#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "aeae/tensor.hpp"

namespace aeae {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the
/// owning Tape is alive.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  /// Gradient accumulated by the last backward pass; zeros if unreached.
  Tensor grad() const;
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Ordered record of primitive operations for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so every node's inputs precede
/// it and a single reverse sweep visits each node once. A Tape is confined
/// to one thread; separate tapes are independent.
class Tape {
 public:
  /// Propagates the gradient of a node into the gradients of its inputs.
  /// Implementations read `tape.grad_ref(self)` and accumulate into
  /// `tape.accumulate(input_id)` for inputs that require a gradient.
  using BackwardFn = std::function<void(Tape& tape, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = false);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// Appends an operation result. The backward function is dropped when no
  /// input requires a gradient.
  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward,
             const char* op = "op");

  /// Reverse sweep from a scalar loss (seed gradient 1).
  void backward(Var loss);
  /// Vector-Jacobian product: reverse sweep seeded with `seed`.
  void backward(Var output, const Tensor& seed);
  void zero_grad();

  std::size_t size() const { return nodes_.size(); }
  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  /// Name of the primitive that produced a node ("leaf" for leaves).
  const char* op(std::size_t id) const { return nodes_.at(id).op; }
  const std::vector<std::size_t>& inputs(std::size_t id) const {
    return nodes_.at(id).inputs;
  }

  /// Current gradient of a node (empty tensor if none accumulated).
  const Tensor& grad_ref(std::size_t id) const { return nodes_.at(id).grad; }
  /// Gradient buffer of a node, zero-initialised on first access.
  Tensor& accumulate(std::size_t id);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    const char* op = "leaf";
  };
  std::vector<Node> nodes_;
};

/// Differentiable primitives. All image tensors are NCHW.
namespace ops {

/// Cross-correlation with zero padding. kernel is [out, in, kh, kw].
Var conv2d(Var input, Var kernel, std::size_t stride = 1, std::size_t padding = 0);
/// Adds bias[c] along axis 1 (channels for NCHW, features for [N, F]).
Var add_bias(Var input, Var bias);
Var maxpool2d(Var input, std::size_t window);
/// Nearest-neighbour upsampling.
Var upsample2d(Var input, std::size_t factor);
/// input [N, in], weight [out, in], bias [out] -> [N, out].
Var dense(Var input, Var weight, Var bias);

Var relu(Var x);
Var sigmoid(Var x);
Var tanh(Var x);
Var reshape(Var x, Shape shape);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var x, double factor);
Var add_scalar(Var x, double offset);
Var sum(Var x);

/// Row-wise softmax over the last axis, max-subtracted.
Var softmax(Var logits);
/// Mean over rows of -log softmax(logits)[label]. logits is [N, k] or [k].
Var cross_entropy(Var logits, std::span<const std::size_t> labels);
Var cross_entropy(Var logits, std::size_t label);
/// Mean of squared differences over all elements.
Var mse(Var a, Var b);

}  // namespace ops

/// Non-recording numeric helpers shared by models and detector.
Tensor softmax_rows(const Tensor& logits);

/// Central finite-difference gradient of a scalar function.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f,
                        const Tensor& x, double h);

}  // namespace aeae
