#pragma once

// Tape-based reverse-mode differentiation. A Graph records nodes in creation
// order; backward() walks them in reverse, which is a valid topological order
// because every node only refers to earlier nodes.

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "xlab/num/tensor.hpp"

namespace xlab::num {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <class T>
class Graph;

template <class T>
class Var {
 public:
  Var() = default;
  Var(Graph<T>* g, std::uint32_t id) : graph_(g), id_(id) {}

  Graph<T>& graph() const { return *graph_; }
  std::uint32_t id() const { return id_; }
  const Tensor<T>& value() const { return graph_->value(*this); }
  const Shape& shape() const { return value().shape; }
  bool valid() const { return graph_ != nullptr; }

 private:
  Graph<T>* graph_ = nullptr;
  std::uint32_t id_ = 0;
};

template <class T>
class Graph {
 public:
  /// Called with the graph and the node's own handle.
  using Backward = std::function<void(Graph&, Var<T>)>;

  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  /// Leaf that never receives a gradient.
  Var<T> constant(Tensor<T> value) { return push(std::move(value), nullptr, false, {}); }

  /// Leaf bound to an externally owned parameter. The graph reads the value in
  /// place and accumulates into `p.grad` during backward. `p` must outlive the
  /// graph and must not be resized while it is alive.
  Var<T> param(Tensor<T>& p) {
    if (grad_enabled_) p.ensure_grad();
    return push({}, &p, grad_enabled_, {});
  }

  /// Interior node. `backward` reads this node's gradient and accumulates into
  /// its inputs; it is dropped when no input requires a gradient.
  Var<T> op(Tensor<T> value, bool requires_grad, Backward backward) {
    const bool rg = grad_enabled_ && requires_grad;
    return push(std::move(value), nullptr, rg, rg ? std::move(backward) : Backward{});
  }

  const Tensor<T>& value(Var<T> v) const {
    const Node& n = nodes_.at(v.id());
    return n.param ? *n.param : n.value;
  }

  bool requires_grad(Var<T> v) const { return nodes_.at(v.id()).requires_grad; }

  /// Gradient buffer of a node, allocated on first use.
  std::vector<T>& grad(Var<T> v) {
    Node& n = nodes_.at(v.id());
    if (n.param) return n.param->ensure_grad();
    if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), T(0));
    return n.grad;
  }

  /// Seeds d(loss)/d(loss) = 1 and runs the tape backwards. `loss` must hold a
  /// single element.
  void backward(Var<T> loss) {
    if (value(loss).size() != 1) {
      throw ShapeError("backward: loss must be scalar, got shape " + shape_str(value(loss).shape));
    }
    if (!requires_grad(loss)) return;
    grad(loss)[0] += T(1);
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.backward && !n.grad.empty()) n.backward(*this, Var<T>(this, static_cast<std::uint32_t>(i)));
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T>* param = nullptr;
    std::vector<T> grad;
    bool requires_grad = false;
    Backward backward;
  };

  Var<T> push(Tensor<T> value, Tensor<T>* param, bool rg, Backward bw) {
    Node n;
    n.value = std::move(value);
    n.param = param;
    n.requires_grad = rg;
    n.backward = std::move(bw);
    nodes_.push_back(std::move(n));
    return Var<T>(this, static_cast<std::uint32_t>(nodes_.size() - 1));
  }

  std::vector<Node> nodes_;
  bool grad_enabled_;
};

}  // namespace xlab::num
