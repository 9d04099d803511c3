#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "starnet/error.hpp"

namespace starnet {
namespace nn {

// Row-major so batches stack along rows and checkpoint dumps are row-major.
template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using MaskMat =
    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class S>
class Var;

// One tape node: a value, its (lazily allocated) gradient and a closure that
// scatters the gradient to the parents.
template <class S>
struct Node {
  Mat<S> value;
  Mat<S> grad;
  bool requires_grad = false;
  std::vector<Var<S>> parents;
  std::function<void(Node<S>&)> backward;
  std::uint64_t order = 0;

  void ensure_grad() {
    if (grad.rows() != value.rows() || grad.cols() != value.cols()) {
      grad.setZero(value.rows(), value.cols());
    }
  }
};

namespace detail {
inline std::uint64_t next_node_order() {
  static std::uint64_t counter = 0;
  return ++counter;
}
}  // namespace detail

template <class S>
class Var {
 public:
  Var() = default;

  static Var leaf(Mat<S> value, bool requires_grad = false) {
    Var v;
    v.node_ = std::make_shared<Node<S>>();
    v.node_->value = std::move(value);
    v.node_->requires_grad = requires_grad;
    v.node_->order = detail::next_node_order();
    return v;
  }

  static Var make(Mat<S> value, std::vector<Var> parents,
                  std::function<void(Node<S>&)> backward) {
    Var v;
    v.node_ = std::make_shared<Node<S>>();
    v.node_->value = std::move(value);
#ifndef NDEBUG
    if (!v.node_->value.allFinite()) {
      throw Error("numeric", "non-finite value produced in forward pass");
    }
#endif
    for (const auto& p : parents) {
      if (p.requires_grad()) {
        v.node_->requires_grad = true;
        break;
      }
    }
    if (v.node_->requires_grad) {
      v.node_->parents = std::move(parents);
      v.node_->backward = std::move(backward);
    }
    v.node_->order = detail::next_node_order();
    return v;
  }

  bool defined() const { return node_ != nullptr; }
  const Mat<S>& value() const { return node_->value; }
  Mat<S>& value() { return node_->value; }
  const Mat<S>& grad() const { return node_->grad; }
  Mat<S>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  Node<S>* node() const { return node_.get(); }

  void zero_grad() {
    if (node_) node_->grad.setZero(node_->value.rows(), node_->value.cols());
  }

  // Reverse-mode sweep from this node. Seeds with ones (scalar losses pass a
  // 1x1 node). Visits nodes in reverse creation order, which is a valid
  // topological order because parents are always created before children.
  void backward() const {
    if (!node_ || !node_->requires_grad) return;
    node_->ensure_grad();
    node_->grad.setOnes(node_->value.rows(), node_->value.cols());

    std::vector<Node<S>*> tape;
    std::unordered_set<Node<S>*> seen;
    std::vector<Node<S>*> stack{node_.get()};
    seen.insert(node_.get());
    while (!stack.empty()) {
      Node<S>* n = stack.back();
      stack.pop_back();
      tape.push_back(n);
      for (const auto& p : n->parents) {
        Node<S>* pn = p.node();
        if (pn->requires_grad && seen.insert(pn).second) {
          stack.push_back(pn);
        }
      }
    }
    std::sort(tape.begin(), tape.end(),
              [](const Node<S>* a, const Node<S>* b) { return a->order > b->order; });
    for (Node<S>* n : tape) {
      if (n->backward) {
        for (auto& p : n->parents) p.node()->ensure_grad();
        n->backward(*n);
      }
    }
  }

 private:
  std::shared_ptr<Node<S>> node_;
};

}  // namespace nn
}  // namespace starnet
