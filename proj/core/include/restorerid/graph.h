#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "restorerid/tensor.h"

namespace rid {

// Reverse-mode tape. Nodes are created in topological order during the
// forward pass; backward() walks them in reverse. Gradients are allocated
// lazily, so untouched subgraphs cost nothing.
template <typename T>
class Graph {
 public:
  struct Node {
    TensorT<T> value;
    TensorT<T> grad;  // empty until first accumulation
    std::function<void()> backward;
  };

  // id the next add() will return; lets closures capture their own node id
  int next_id() const { return static_cast<int>(nodes_.size()); }

  int add(TensorT<T> value, std::function<void()> backward = {}) {
    nodes_.push_back(Node{std::move(value), {}, std::move(backward)});
    return static_cast<int>(nodes_.size()) - 1;
  }

  TensorT<T>& val(int i) { return nodes_[static_cast<size_t>(i)].value; }

  bool has_grad(int i) const { return !nodes_[static_cast<size_t>(i)].grad.empty(); }

  // gradient buffer, allocated on first use
  TensorT<T>& grad(int i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (n.grad.empty()) n.grad = TensorT<T>::zeros(n.value.shape);
    return n.grad;
  }

  void backward(int loss) {
    grad(loss).fill(T(1));
    for (int i = loss; i >= 0; --i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (!n.grad.empty() && n.backward) n.backward();
    }
  }

  size_t size() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
};

template <typename T>
struct Var {
  Graph<T>* g = nullptr;
  int id = -1;

  bool valid() const { return g != nullptr && id >= 0; }
  TensorT<T>& val() const { return g->val(id); }
  const std::vector<int>& shape() const { return g->val(id).shape; }
};

// Trainable parameter. Owns its value, accumulated gradient, and Adam moments.
template <typename T>
struct Param {
  std::string name;
  TensorT<T> value;
  TensorT<T> grad;
  TensorT<T> m, v;  // optimizer state, allocated on first step

  void zero_grad() {
    if (!grad.empty()) grad.fill(T(0));
  }
};

template <typename T>
Var<T> constant(Graph<T>& g, TensorT<T> t) {
  return {&g, g.add(std::move(t))};
}

// Leaf node backed by a Param; backward accumulates into param.grad.
template <typename T>
Var<T> leaf(Graph<T>& g, Param<T>& p) {
  Graph<T>* gp = &g;
  Param<T>* pp = &p;
  int id = g.next_id();
  g.add(p.value, [gp, pp, id]() {
    const TensorT<T>& gy = gp->grad(id);
    if (pp->grad.empty()) pp->grad = TensorT<T>::zeros(pp->value.shape);
    for (int64_t k = 0; k < gy.numel(); ++k) pp->grad[k] += gy[k];
  });
  return {gp, id};
}

}  // namespace rid
