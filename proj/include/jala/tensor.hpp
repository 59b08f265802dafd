#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "jala/common.hpp"
#include "jala/rng.hpp"

namespace jala {

// Dense tensor with tape-based reverse-mode differentiation. T is float or
// double; test builds and the acceptance suite use double, training runs
// default to float. Nodes form an acyclic graph built per forward pass and
// released when the last handle drops. Values are mutable in place only
// through the optimizer, between passes.
template <class T>
struct TensorNode {
  std::vector<int> shape;
  std::shared_ptr<std::vector<T>> data;
  std::vector<T> grad;  // allocated lazily, same length as data
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode<T>>> parents;
  std::function<void(TensorNode<T>&)> backward;  // pushes this->grad into parents

  std::int64_t size() const { return static_cast<std::int64_t>(data->size()); }
};

template <class T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
    return filled(std::move(shape), T(0), requires_grad);
  }

  static Tensor filled(std::vector<int> shape, T value, bool requires_grad = false) {
    auto node = std::make_shared<TensorNode<T>>();
    std::int64_t n = 1;
    for (int d : shape) {
      check(d >= 0, "Tensor: negative dimension");
      n *= d;
    }
    node->shape = std::move(shape);
    node->data = std::make_shared<std::vector<T>>(static_cast<std::size_t>(n), value);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor from_values(std::vector<int> shape, std::vector<T> values,
                            bool requires_grad = false) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    check(n == static_cast<std::int64_t>(values.size()),
          "Tensor: shape product does not match value count");
    auto node = std::make_shared<TensorNode<T>>();
    node->shape = std::move(shape);
    node->data = std::make_shared<std::vector<T>>(std::move(values));
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor scalar(T v, bool requires_grad = false) {
    return from_values({1}, {v}, requires_grad);
  }

  // Gaussian init, the standard choice for all weight matrices here.
  static Tensor randn(std::vector<int> shape, Rng& rng, T stddev, bool requires_grad = true) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (auto& v : t.values()) v = static_cast<T>(rng.normal()) * stddev;
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  std::int64_t size() const { return node_->size(); }
  int dim(int i) const { return node_->shape.at(static_cast<std::size_t>(i)); }
  int rows() const { return node_->shape.at(0); }
  int cols() const { return node_->shape.at(1); }

  std::vector<T>& values() { return *node_->data; }
  const std::vector<T>& values() const { return *node_->data; }
  T item() const {
    check(size() == 1, "Tensor::item: not a scalar");
    return (*node_->data)[0];
  }

  bool requires_grad() const { return node_->requires_grad; }

  std::vector<T>& grad() {
    ensure_grad();
    return node_->grad;
  }
  const std::vector<T>& grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }

  void ensure_grad() {
    if (node_->grad.size() != node_->data->size())
      node_->grad.assign(node_->data->size(), T(0));
  }

  void zero_grad() {
    if (!node_->grad.empty()) node_->grad.assign(node_->data->size(), T(0));
  }

  // Shares the value buffer but participates in no graph. Used to route
  // gradients: a parameter consumed through detached() contributes values but
  // never receives gradient from that use.
  Tensor detached() const {
    auto node = std::make_shared<TensorNode<T>>();
    node->shape = node_->shape;
    node->data = node_->data;
    node->requires_grad = false;
    return Tensor(std::move(node));
  }

  std::shared_ptr<TensorNode<T>> node() const { return node_; }

  // Reverse-mode sweep from a scalar output. Accumulates into .grad of every
  // reachable node with requires_grad set.
  void backward() const {
    check(size() == 1, "backward: output must be scalar");
    std::vector<TensorNode<T>*> order;
    topo_sort(order);
    node_->grad.assign(1, T(1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      TensorNode<T>* n = *it;
      if (n->backward && !n->grad.empty()) n->backward(*n);
    }
  }

  explicit Tensor(std::shared_ptr<TensorNode<T>> node) : node_(std::move(node)) {}

 private:
  void topo_sort(std::vector<TensorNode<T>*>& order) const {
    std::unordered_set<TensorNode<T>*> seen;
    // Iterative DFS; graphs can be a few thousand nodes deep per step.
    std::vector<std::pair<TensorNode<T>*, std::size_t>> stack;
    stack.push_back({node_.get(), 0});
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, idx] = stack.back();
      if (idx < n->parents.size()) {
        TensorNode<T>* p = n->parents[idx++].get();
        if (p->requires_grad || !p->parents.empty()) {
          if (seen.insert(p).second) stack.push_back({p, 0});
        }
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
  }

  std::shared_ptr<TensorNode<T>> node_;
};

namespace detail {

template <class T>
inline bool track(const Tensor<T>& t) {
  return t.requires_grad() || !t.node()->parents.empty();
}

template <class T>
inline Tensor<T> make_result(std::vector<int> shape, std::vector<T> values,
                             std::vector<Tensor<T>> parents,
                             std::function<void(TensorNode<T>&)> backward) {
  bool any = false;
  for (const auto& p : parents) any = any || track(p);
  auto out = Tensor<T>::from_values(std::move(shape), std::move(values));
  if (any) {
    auto node = out.node();
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node());
    node->backward = std::move(backward);
  }
  return out;
}

template <class T>
inline void accumulate(TensorNode<T>& parent, const std::vector<T>& delta) {
  if (!parent.requires_grad && parent.parents.empty()) return;
  if (parent.grad.size() != parent.data->size()) parent.grad.assign(parent.data->size(), T(0));
  for (std::size_t i = 0; i < delta.size(); ++i) parent.grad[i] += delta[i];
}

}  // namespace detail

}  // namespace jala
