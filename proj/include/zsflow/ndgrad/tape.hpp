#pragma once

#include <cassert>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "zsflow/ndgrad/array.hpp"

namespace zsflow::nd {

template <typename Real>
class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
template <typename Real>
class Var {
 public:
  Var() = default;
  Var(Tape<Real>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<Real>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Shape& shape() const { return tape_->node(id_).shape; }
  const std::vector<Real>& value() const { return tape_->node(id_).value; }
  const std::vector<Real>& grad() const { return tape_->grad(id_); }
  std::size_t size() const { return value().size(); }
  std::size_t rows() const { return shape().empty() ? 1 : shape()[0]; }
  std::size_t cols() const { return shape().size() < 2 ? 1 : size() / shape()[0]; }
  Real item() const {
    if (size() != 1) throw ShapeError("item() on non-scalar " + to_string(shape()));
    return value()[0];
  }
  Real at(std::size_t r, std::size_t c) const { return value()[r * cols() + c]; }
  bool requires_grad() const { return tape_->node(id_).needs_grad; }

 private:
  Tape<Real>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Per-step computation record. Nodes are appended in evaluation order, so the
/// node index order is a topological order and backward walks it in reverse.
template <typename Real>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  struct Node {
    Shape shape;
    std::vector<Real> value;
    std::vector<Real> grad;  // allocated lazily
    BackwardFn backward;
    std::string op;
    bool needs_grad = false;
    DiffArray<Real>* param = nullptr;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Non-differentiable input.
  Var<Real> constant(Shape shape, std::vector<Real> value) {
    return push(std::move(shape), std::move(value), "constant", false, {});
  }
  Var<Real> constant(const DiffArray<Real>& a) { return constant(a.shape, a.data); }
  Var<Real> scalar(Real v) { return constant({1}, {v}); }

  /// Differentiable input whose gradient can be read after backward().
  Var<Real> leaf(Shape shape, std::vector<Real> value) {
    return push(std::move(shape), std::move(value), "leaf", true, {});
  }

  /// Differentiable view of a parameter; backward() accumulates into p.grad.
  Var<Real> param(DiffArray<Real>& p) {
    auto v = push(p.shape, p.data, "param", true, {});
    nodes_[v.id()].param = &p;
    return v;
  }
  /// Parameter used as a frozen constant (no gradient flows to it).
  Var<Real> frozen(const DiffArray<Real>& p) { return constant(p.shape, p.data); }

  /// Records a node. `backward` may be empty only for nodes that never need grad;
  /// reaching such a node with a gradient raises GraphError.
  Var<Real> push(Shape shape, std::vector<Real> value, std::string op, bool needs_grad, BackwardFn backward) {
    if (value.size() != numel(shape))
      throw ShapeError(op + ": value length does not match shape " + to_string(shape));
    Node n;
    n.shape = std::move(shape);
    n.value = std::move(value);
    n.op = std::move(op);
    n.needs_grad = needs_grad;
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var<Real>(this, nodes_.size() - 1);
  }

  /// Result node of an op: requires grad iff any input does.
  Var<Real> result(Shape shape, std::vector<Real> value, std::string op, std::initializer_list<Var<Real>> inputs,
                   BackwardFn backward) {
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    return push(std::move(shape), std::move(value), std::move(op), any, any ? std::move(backward) : BackwardFn{});
  }
  Var<Real> result(Shape shape, std::vector<Real> value, std::string op, std::span<const Var<Real>> inputs,
                   BackwardFn backward) {
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    return push(std::move(shape), std::move(value), std::move(op), any, any ? std::move(backward) : BackwardFn{});
  }

  const Node& node(std::size_t id) const { return nodes_[id]; }
  std::size_t size() const { return nodes_.size(); }

  /// Gradient buffer of node `id` (zeros if nothing reached it).
  const std::vector<Real>& grad(std::size_t id) const {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad.assign(n.value.size(), Real(0));
    return n.grad;
  }

  /// Mutable gradient accumulator for `id`, or nullptr if it does not need grad.
  Real* grad_target(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.needs_grad) return nullptr;
    if (n.grad.empty()) n.grad.assign(n.value.size(), Real(0));
    return n.grad.data();
  }
  Real* grad_target(const Var<Real>& v) { return grad_target(v.id()); }

  const std::vector<Real>& upstream(std::size_t id) const { return nodes_[id].grad; }

  void backward(const Var<Real>& out) {
    if (out.size() != 1) throw GraphError("backward: output must be scalar, got shape " + to_string(out.shape()));
    if (!all_finite(out.value())) throw NumericFault(nodes_[out.id()].op, "backward: non-finite loss value");
    for (auto& n : nodes_) n.grad.clear();
    if (!nodes_[out.id()].needs_grad) return;
    nodes_[out.id()].grad.assign(1, Real(1));
    for (std::size_t i = out.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.empty() || !n.needs_grad) continue;
      if (!all_finite(n.grad)) throw NumericFault(n.op, "backward: non-finite gradient at op '" + n.op + "'");
      if (n.param) {
        auto& p = *n.param;
        if (p.grad.size() != p.data.size()) p.grad.assign(p.data.size(), Real(0));
        for (std::size_t k = 0; k < n.grad.size(); ++k) p.grad[k] += n.grad[k];
        continue;
      }
      if (n.op == "leaf") continue;
      if (!n.backward) throw GraphError("backward: unsupported primitive '" + n.op + "' on tape");
      n.backward(*this, i);
    }
  }

 private:
  mutable std::vector<Node> nodes_;
};

}  // namespace zsflow::nd
