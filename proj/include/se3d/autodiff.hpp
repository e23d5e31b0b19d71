#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "se3d/tensor.hpp"

namespace se3d {

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One recorded value in a dynamic computation graph. The backward
/// function reads this node's grad and accumulates into its parents'.
struct Node {
  Tensor value;
  Tensor grad;  // empty until first accumulation
  bool requires_grad = false;
  int64_t id = 0;  // creation order within the process
  std::string label;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward_fn;

  Tensor& ensure_grad();
};

/// Handle to a graph node. Cheap to copy; a graph stays alive as long as
/// some Var (or Parameter) still points into it.
class Var {
 public:
  Var() = default;
  explicit Var(NodePtr n) : n_(std::move(n)) {}
  static Var constant(Tensor value, std::string label = {});
  static Var leaf(Tensor value, std::string label = {});  // requires_grad

  bool defined() const { return n_ != nullptr; }
  const Tensor& value() const { return n_->value; }
  Tensor& grad() const { return n_->ensure_grad(); }
  bool requires_grad() const { return n_ && n_->requires_grad; }
  const Shape& shape() const { return n_->value.shape(); }
  int64_t numel() const { return n_->value.numel(); }
  const NodePtr& node() const { return n_; }

 private:
  NodePtr n_;
};

bool grad_enabled();

/// Disables graph recording for its scope (inference / finite differences).
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

/// Records a new op output. Parents and backward_fn are dropped when grad
/// recording is off or no parent needs gradients.
Var make_node(Tensor value, std::vector<Var> parents,
              std::function<void(Node&)> backward_fn, std::string label = {});

void accumulate_grad(Node& n, const Tensor& g);

/// Reverse-mode sweep from a scalar loss. Accumulates dloss/dp into every
/// reachable node with requires_grad; interior grads are released as soon
/// as they have been consumed.
void backward(const Var& loss);

/// Walks the graph under `root` in creation order and reports the label of
/// the first tensor holding a non-finite value, or "" if all are finite.
std::string first_nonfinite_label(const Var& root);

}  // namespace se3d
