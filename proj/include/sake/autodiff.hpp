#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "sake/errors.hpp"
#include "sake/tensor.hpp"

namespace sake {

// Handle to a node on a Tape.
struct Var {
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::size_t id = kNone;
  bool valid() const { return id != kNone; }
};

// Reverse-mode tape. Nodes are appended in evaluation order, so the reverse of
// insertion order is a valid topological order for backpropagation.
template <typename T>
class Tape {
 public:
  using value_type = T;
  // Receives the tape and the id of the node whose grad is being propagated.
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Var constant(Tensor<T> value) { return push("constant", std::move(value), {}, false, nullptr); }

  Var parameter(Tensor<T> value) { return push("parameter", std::move(value), {}, true, nullptr); }

  // Records the result of an op. The node requires grad iff any input does.
  Var record(const char* op, Tensor<T> value, std::vector<Var> inputs, BackwardFn backward) {
    if (!value.all_finite()) {
      throw NumericError(op, std::string("non-finite value produced by ") + op);
    }
    bool needs = false;
    for (Var in : inputs) needs = needs || nodes_.at(in.id).requires_grad;
    return push(op, std::move(value), std::move(inputs), needs, needs ? std::move(backward) : nullptr);
  }

  const Tensor<T>& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  const char* op(Var v) const { return nodes_.at(v.id).op; }
  std::span<const Var> inputs(Var v) const { return nodes_.at(v.id).inputs; }
  std::size_t size() const { return nodes_.size(); }

  // Gradient of the last backward() target. Zero for grad-requiring nodes the
  // loss does not depend on.
  const Tensor<T>& grad(Var v) const {
    const Node& n = nodes_.at(v.id);
    if (!n.requires_grad) throw ContractViolation("node does not require grad");
    if (n.grad.empty()) throw ContractViolation("backward() has not been run");
    return n.grad;
  }

  // Mutable gradient buffer, used by op backward functions.
  Tensor<T>& grad_buffer(Var v) { return grad_buffer(v.id); }
  Tensor<T>& grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
  }

  void backward(Var loss) {
    if (value(loss).size() != 1) {
      throw ContractViolation("backward() needs a scalar loss, got shape " +
                              shape_string(value(loss).shape()));
    }
    for (Node& n : nodes_) {
      if (n.requires_grad) n.grad = Tensor<T>(n.value.shape());
    }
    if (!nodes_[loss.id].requires_grad) return;
    nodes_[loss.id].grad[0] = T{1};
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.requires_grad && n.backward) n.backward(*this, i);
    }
  }

 private:
  struct Node {
    const char* op;
    Tensor<T> value;
    Tensor<T> grad;
    std::vector<Var> inputs;
    bool requires_grad;
    BackwardFn backward;
  };

  Var push(const char* op, Tensor<T> value, std::vector<Var> inputs, bool requires_grad,
           BackwardFn backward) {
    nodes_.push_back(Node{op, std::move(value), {}, std::move(inputs), requires_grad,
                          std::move(backward)});
    return Var{nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
};

}  // namespace sake
