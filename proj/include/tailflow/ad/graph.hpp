#pragma once
// Dynamic reverse-mode tape. A graph is built by every forward evaluation and
// is released when the last Var referring to its root goes out of scope.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "tailflow/ad/tensor.hpp"

namespace tailflow::ad {

struct Node;

/// Backward closure: reads `self.grad` and accumulates into the parents.
using BackwardFn = std::function<void(Node& self)>;

struct Node {
  Tensor value;
  Tensor grad;
  bool has_grad = false;
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward;

  /// Gradient buffer, zero-initialised on first access.
  Tensor& grad_buffer();
};

/// Shared handle to a graph node.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var constant(Tensor value);
  static Var constant(double value) { return constant(Tensor::scalar(value)); }
  static Var leaf(Tensor value, bool requires_grad = true);

  explicit operator bool() const noexcept { return static_cast<bool>(node_); }
  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  double item() const { return node_->value.item(); }
  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  bool is_leaf() const noexcept { return node_ && node_->is_leaf; }

  /// Accumulated gradient; zeros of the value's shape when none was produced.
  Tensor grad() const;
  bool has_grad() const noexcept { return node_ && node_->has_grad; }
  void zero_grad();

  /// Mutable access to a leaf's value. This and gradient accumulation are the
  /// only mutation paths; calling it on an interior node throws.
  Tensor& leaf_value();

  const std::shared_ptr<Node>& node() const noexcept { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Creates an interior node. The backward closure is dropped when gradients
/// are disabled or no parent requires them.
Var make_node(Tensor value, std::vector<Var> parents, BackwardFn backward);

/// Accumulate `delta` into the gradient of `parent` if it requires one.
void accumulate_grad(const std::shared_ptr<Node>& parent, const Tensor& delta);

/// Reverse sweep from a scalar root. Leaf gradients accumulate across calls;
/// interior gradients are recomputed on every call.
void backward(const Var& root);

bool grad_enabled() noexcept;

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

enum class ParamGroup { weight, bias, dof };

/// Trainable leaf with a checkpoint name.
struct Parameter {
  std::string name;
  Var var;
  ParamGroup group = ParamGroup::weight;
  bool trainable = true;

  static Parameter make(std::string name, Tensor init, ParamGroup group = ParamGroup::weight) {
    return Parameter{std::move(name), Var::leaf(std::move(init), true), group, true};
  }
};

}  // namespace tailflow::ad
