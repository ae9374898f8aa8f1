#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "hitframe/tensor.hpp"

namespace hitframe::nn {

using NodeId = std::size_t;

// Reverse-mode tape. Each op pushes one node whose closure accumulates into
// parent gradients; creation order is a topological order, so backward() is a
// single reverse sweep. A tape is built per forward pass and discarded.
class Tape {
 public:
  NodeId leaf(Tensor value, bool needs_grad = false) {
    return push(std::move(value), needs_grad, nullptr);
  }

  NodeId push(Tensor value, bool needs_grad, std::function<void(Tape&, NodeId)> back) {
    Node n;
    n.grad = needs_grad ? Tensor::zeros(value.shape) : Tensor();
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
  }

  const Tensor& val(NodeId id) const { return nodes_[id].value; }

  Tensor& grad(NodeId id) {
    require(nodes_[id].needs_grad, Errc::bad_argument, "gradient requested on a constant node");
    return nodes_[id].grad;
  }
  const Tensor& grad(NodeId id) const {
    require(nodes_[id].needs_grad, Errc::bad_argument, "gradient requested on a constant node");
    return nodes_[id].grad;
  }

  bool needs_grad(NodeId id) const { return nodes_[id].needs_grad; }

  // Seeds d(root)/d(root) = 1 and sweeps the tape backwards. root must be a
  // scalar node.
  void backward(NodeId root) {
    require(nodes_[root].value.numel() == 1, Errc::bad_argument,
            "backward root must be scalar, got " + shape_str(nodes_[root].value.shape));
    require(nodes_[root].needs_grad, Errc::bad_argument, "backward root does not require grad");
    nodes_[root].grad.values[0] = 1.0;
    for (NodeId i = root + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.needs_grad && n.back) n.back(*this, i);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    std::function<void(Tape&, NodeId)> back;
  };
  std::vector<Node> nodes_;
};

}  // namespace hitframe::nn
