// Copyright 2026 The tse Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Reverse-mode automatic differentiation over dense row-major tensors.
//
// A Tensor is a shared handle to a graph Node. Operations that receive at
// least one input with requires_grad record their inputs and a closure that
// propagates the output gradient back to them; operations on constants fold
// immediately and record nothing.

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "tse/errors.hpp"

namespace tse::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until first written
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Node() = default;
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  // Long recurrent graphs would otherwise recurse once per node on teardown.
  ~Node() {
    std::vector<std::shared_ptr<Node>> pending = std::move(parents);
    while (!pending.empty()) {
      std::shared_ptr<Node> n = std::move(pending.back());
      pending.pop_back();
      if (n && n.use_count() == 1) {
        for (auto& p : n->parents) pending.push_back(std::move(p));
        n->parents.clear();
      }
    }
  }

  bool is_leaf() const { return !backward_fn; }

  std::vector<T>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    return grad;
  }
};

template <typename T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<Node<T>>;

  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor from(Shape shape, std::vector<T> data,
                     bool requires_grad = false) {
    if (shape_numel(shape) != data.size()) {
      throw DimensionError("tensor data length " + std::to_string(data.size()) +
                           " does not match shape " + shape_string(shape));
    }
    auto n = std::make_shared<Node<T>>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const std::size_t count = shape_numel(shape);
    return from(std::move(shape), std::vector<T>(count, T(0)), requires_grad);
  }

  static Tensor full(Shape shape, T fill, bool requires_grad = false) {
    const std::size_t count = shape_numel(shape);
    return from(std::move(shape), std::vector<T>(count, fill), requires_grad);
  }

  static Tensor scalar(T v, bool requires_grad = false) {
    return from(Shape{1}, std::vector<T>{v}, requires_grad);
  }

  bool defined() const { return static_cast<bool>(node_); }
  const NodePtr& node() const { return node_; }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<const T> data() const { return node_->value; }
  // Writes bypass the graph; only meant for leaves (parameter updates).
  std::span<T> mutable_data() const { return node_->value; }
  const std::vector<T>& values() const { return node_->value; }

  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() const { return node_->ensure_grad(); }
  void zero_grad() const { node_->grad.assign(node_->value.size(), T(0)); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) const { node_->requires_grad = on; }

  T item() const {
    if (numel() != 1) {
      throw DimensionError("item() on non-scalar tensor of shape " +
                           shape_string(shape()));
    }
    return node_->value[0];
  }

  T operator[](std::size_t i) const { return node_->value[i]; }

  Tensor detach() const {
    return from(node_->shape, node_->value, false);
  }

  // Reverse sweep from a scalar root. Leaf gradients accumulate across calls;
  // interior gradients are rebuilt on every call.
  void backward() const {
    if (numel() != 1) {
      throw DimensionError("backward() requires a scalar root, got shape " +
                           shape_string(shape()));
    }
    if (!node_->requires_grad) return;

    std::vector<Node<T>*> order;
    std::unordered_set<const Node<T>*> visited;
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    visited.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->parents.size()) {
        Node<T>* p = n->parents[next++].get();
        if (p->requires_grad && visited.insert(p).second) {
          stack.emplace_back(p, 0);
        }
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }

    for (Node<T>* n : order) {
      if (n->is_leaf()) {
        n->ensure_grad();
      } else {
        n->grad.assign(n->value.size(), T(0));
      }
    }
    node_->grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node<T>* n = *it;
      if (n->backward_fn) {
        n->backward_fn(*n);
        if (n != node_.get()) {
          n->grad.clear();
          n->grad.shrink_to_fit();
        }
      }
    }
  }

 private:
  NodePtr node_;
};

inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

// While alive, operations on this thread record no graph.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(grad_mode_flag()) { grad_mode_flag() = false; }
  ~NoGradGuard() { grad_mode_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Fingerprint of every piecewise-linear branch taken on this thread, kept
// only while a recorder is alive. Finite differences use it to notice that a
// perturbation moved some unit across a kink.
inline std::uint64_t*& branch_fingerprint_slot() {
  thread_local std::uint64_t* slot = nullptr;
  return slot;
}

inline void record_branch(bool taken) {
  if (std::uint64_t* fp = branch_fingerprint_slot()) {
    *fp = (*fp ^ (taken ? 0x9e3779b97f4a7c15ULL : 0x85ebca6bULL)) * 0x100000001b3ULL;
  }
}

class BranchRecorder {
 public:
  BranchRecorder() : previous_(branch_fingerprint_slot()) { branch_fingerprint_slot() = &value_; }
  ~BranchRecorder() { branch_fingerprint_slot() = previous_; }
  BranchRecorder(const BranchRecorder&) = delete;
  BranchRecorder& operator=(const BranchRecorder&) = delete;
  std::uint64_t value() const { return value_; }

 private:
  std::uint64_t value_ = 0xcbf29ce484222325ULL;
  std::uint64_t* previous_;
};

// Builds an operation result. The closure is kept only if some input is
// tracked, so constant subexpressions carry no graph.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> value,
                      std::vector<Tensor<T>> inputs,
                      std::function<void(Node<T>&)> backward_fn) {
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  bool tracked = false;
  if (grad_mode_flag())
    for (const auto& in : inputs) tracked = tracked || in.requires_grad();
  if (tracked) {
    n->requires_grad = true;
    n->parents.reserve(inputs.size());
    for (const auto& in : inputs) n->parents.push_back(in.node());
    n->backward_fn = std::move(backward_fn);
  }
  return Tensor<T>(std::move(n));
}

// Gradient buffer of the i-th parent, or nullptr if it is untracked.
template <typename T>
T* parent_grad(Node<T>& self, std::size_t i) {
  Node<T>& p = *self.parents[i];
  if (!p.requires_grad) return nullptr;
  return p.ensure_grad().data();
}

template <typename T>
const T* parent_value(const Node<T>& self, std::size_t i) {
  return self.parents[i]->value.data();
}

}  // namespace tse::ad
