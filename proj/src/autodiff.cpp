#include "se3d/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <stdexcept>
#include <unordered_set>

namespace se3d {

namespace {
std::atomic<int64_t> g_next_id{1};
thread_local bool g_grad_enabled = true;
}  // namespace

Tensor& Node::ensure_grad() {
  if (!grad.defined()) grad = Tensor::zeros(value.shape());
  return grad;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Var Var::constant(Tensor value, std::string label) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->id = g_next_id.fetch_add(1);
  n->label = std::move(label);
  return Var(std::move(n));
}

Var Var::leaf(Tensor value, std::string label) {
  Var v = constant(std::move(value), std::move(label));
  v.node()->requires_grad = true;
  return v;
}

Var make_node(Tensor value, std::vector<Var> parents,
              std::function<void(Node&)> backward_fn, std::string label) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->id = g_next_id.fetch_add(1);
  n->label = std::move(label);
  bool needs = false;
  if (g_grad_enabled) {
    for (const Var& p : parents)
      if (p.defined() && p.requires_grad()) needs = true;
  }
  if (needs) {
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (Var& p : parents)
      if (p.defined()) n->parents.push_back(p.node());
    n->backward_fn = std::move(backward_fn);
  }
  return Var(std::move(n));
}

void accumulate_grad(Node& n, const Tensor& g) {
  if (!n.requires_grad) return;
  add_inplace(n.ensure_grad(), g);
}

void backward(const Var& loss) {
  if (!loss.defined()) throw std::invalid_argument("backward: undefined loss");
  if (loss.numel() != 1) throw std::invalid_argument("backward: loss must be a scalar");
  if (!loss.requires_grad()) return;

  // Iterative DFS postorder over the requires_grad subgraph.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next].get();
      ++next;
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->ensure_grad();
  fill_inplace(loss.node()->grad, 1.0);

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->backward_fn) continue;  // leaf
    if (n->grad.defined()) n->backward_fn(*n);
    n->grad = Tensor();  // consumed; free early
  }
}

std::string first_nonfinite_label(const Var& root) {
  if (!root.defined()) return "";
  std::vector<Node*> nodes;
  std::unordered_set<Node*> visited;
  std::vector<Node*> stack{root.node().get()};
  visited.insert(root.node().get());
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    nodes.push_back(n);
    for (const auto& p : n->parents) {
      if (!visited.count(p.get())) {
        visited.insert(p.get());
        stack.push_back(p.get());
      }
    }
  }
  std::sort(nodes.begin(), nodes.end(), [](Node* a, Node* b) { return a->id < b->id; });
  for (Node* n : nodes) {
    if (!n->value.all_finite())
      return n->label.empty() ? ("node#" + std::to_string(n->id)) : n->label;
  }
  return "";
}

}  // namespace se3d
