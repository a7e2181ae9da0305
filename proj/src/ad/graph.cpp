#include "tailflow/ad/graph.hpp"

#include <unordered_set>

#include "tailflow/error.hpp"
#include "tailflow/simd/kernels.hpp"

namespace tailflow::ad {

namespace {
thread_local bool g_grad_enabled = true;
}

Tensor& Node::grad_buffer() {
  if (!has_grad) {
    grad = Tensor(value.shape(), 0.0);
    has_grad = true;
  }
  return grad;
}

Var Var::constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return Var(std::move(n));
}

Var Var::leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return Var(std::move(n));
}

Tensor Var::grad() const {
  if (node_->has_grad) return node_->grad;
  return Tensor(node_->value.shape(), 0.0);
}

void Var::zero_grad() {
  if (node_) {
    node_->has_grad = false;
    node_->grad = Tensor();
  }
}

Tensor& Var::leaf_value() {
  if (!node_ || !node_->is_leaf) throw Error(Errc::invalid_argument, "leaf_value() on an interior node");
  return node_->value;
}

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var make_node(Tensor value, std::vector<Var> parents, BackwardFn backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->is_leaf = false;
  if (g_grad_enabled) {
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (any) {
      n->requires_grad = true;
      n->parents.reserve(parents.size());
      for (auto& p : parents) n->parents.push_back(p.node());
      n->backward = std::move(backward);
    }
  }
  return Var(std::move(n));
}

void accumulate_grad(const std::shared_ptr<Node>& parent, const Tensor& delta) {
  if (!parent->requires_grad) return;
  Tensor& g = parent->grad_buffer();
  auto dst = g.data();
  auto src = delta.data();
  simd::kernels().axpy(1.0, src.data(), dst.data(), dst.size());
}

void backward(const Var& root) {
  if (!root) throw Error(Errc::invalid_argument, "backward on empty Var");
  if (root.value().numel() != 1 || root.value().rank() > 1) {
    throw Error(Errc::shape_mismatch, "backward requires a scalar root, got shape " + to_string(root.shape()));
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS; reversing it gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (!n->is_leaf) {
      n->has_grad = false;
      n->grad = Tensor();
    }
  }
  root.node()->grad_buffer().data()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->is_leaf && n->has_grad && n->backward) n->backward(*n);
  }
}

}  // namespace tailflow::ad
