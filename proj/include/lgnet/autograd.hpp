/**
 * Copyright 2026 The LGNet Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "lgnet/tensor.hpp"

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

namespace lgnet {

namespace detail {
inline bool& grad_enabled_flag() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_enabled_flag(); }

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_enabled_flag()) { detail::grad_enabled_flag() = false; }
  ~NoGradGuard() { detail::grad_enabled_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// One value in the reverse-mode tape.
template <typename Scalar>
struct Node {
  Tensor<Scalar> value;
  Tensor<Scalar> grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  bool has_grad() const { return grad.size() == value.size() && value.size() > 0; }

  Tensor<Scalar>& grad_buffer() {
    if (!has_grad()) grad = Tensor<Scalar>(value.shape());
    return grad;
  }
};

template <typename Scalar>
using Var = std::shared_ptr<Node<Scalar>>;

/// Leaf holding a constant (no gradient).
template <typename Scalar>
Var<Scalar> constant(Tensor<Scalar> value) {
  auto node = std::make_shared<Node<Scalar>>();
  node->value = std::move(value);
  return node;
}

/// Leaf whose gradient is tracked (parameters, or inputs under test).
template <typename Scalar>
Var<Scalar> leaf(Tensor<Scalar> value) {
  auto node = std::make_shared<Node<Scalar>>();
  node->value = std::move(value);
  node->requires_grad = true;
  return node;
}

/// Creates the node for an operation result. Parents are only retained when
/// recording is enabled and at least one parent needs a gradient.
template <typename Scalar>
Var<Scalar> make_result(Tensor<Scalar> value, std::vector<Var<Scalar>> parents,
                        std::function<void(Node<Scalar>&)> backward_fn) {
  auto node = std::make_shared<Node<Scalar>>();
  node->value = std::move(value);
  if (!grad_enabled()) return node;
  bool any = false;
  for (const auto& p : parents) any = any || p->requires_grad;
  if (!any) return node;
  node->requires_grad = true;
  node->parents = std::move(parents);
  node->backward_fn = std::move(backward_fn);
  return node;
}

/// Runs reverse accumulation from `root`, seeding d(root)/d(root) = 1
/// (or `seed` when given). Intermediate graph edges are released afterwards.
template <typename Scalar>
void backward(const Var<Scalar>& root, const Tensor<Scalar>* seed = nullptr) {
  if (!root->requires_grad) return;
  std::vector<Node<Scalar>*> order;
  std::unordered_set<Node<Scalar>*> visited;
  // iterative post-order DFS; graphs are deep enough to make recursion risky
  std::vector<std::pair<Node<Scalar>*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<Scalar>* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  auto& g = root->grad_buffer();
  if (seed) {
    require_same_shape(seed->shape(), root->value.shape(), "backward seed");
    g.data() += seed->data();
  } else {
    g.data().array() += Scalar(1);
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<Scalar>* node = *it;
    if (node->backward_fn && node->has_grad()) node->backward_fn(*node);
  }
  for (Node<Scalar>* node : order) {
    if (node->backward_fn) {
      node->parents.clear();
      node->backward_fn = nullptr;
      node->grad = Tensor<Scalar>();
    }
  }
}

}  // namespace lgnet
