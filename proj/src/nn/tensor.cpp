#include "ectg/nn/tensor.hpp"

#include <algorithm>
#include <unordered_set>

namespace ectg::nn {
namespace {

thread_local bool g_grad_enabled = true;
thread_local std::uint64_t g_seq = 0;

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

namespace detail {

NodePtr make_result(std::size_t rows, std::size_t cols, std::vector<NodePtr> parents,
                    std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->rows = rows;
  node->cols = cols;
  node->value.assign(rows * cols, 0.0);
  node->seq = ++g_seq;
  if (g_grad_enabled) {
    const bool any = std::any_of(parents.begin(), parents.end(),
                                 [](const NodePtr& p) { return p->requires_grad; });
    if (any) {
      node->requires_grad = true;
      node->parents = std::move(parents);
      node->backward = std::move(backward);
    }
  }
  return node;
}

}  // namespace detail

Tensor Tensor::zeros(std::size_t rows, std::size_t cols, bool requires_grad) {
  return from(rows, cols, std::vector<double>(rows * cols, 0.0), requires_grad);
}

Tensor Tensor::from(std::size_t rows, std::size_t cols, std::vector<double> values,
                    bool requires_grad) {
  if (values.size() != rows * cols) {
    throw ShapeError("Tensor::from: " + std::to_string(values.size()) + " values for shape [" +
                     std::to_string(rows) + "x" + std::to_string(cols) + "]");
  }
  auto node = std::make_shared<Node>();
  node->rows = rows;
  node->cols = cols;
  node->value.assign(values.begin(), values.end());
  node->requires_grad = requires_grad;
  node->seq = ++g_seq;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double v, bool requires_grad) { return from(1, 1, {v}, requires_grad); }

Tensor Tensor::row(std::vector<double> values, bool requires_grad) {
  const auto n = values.size();
  return from(1, n, std::move(values), requires_grad);
}

std::string Tensor::shape_str() const {
  return "[" + std::to_string(rows()) + "x" + std::to_string(cols()) + "]";
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item: tensor " + shape_str() + " is not a scalar");
  return node_->value[0];
}

Tensor Tensor::detach() const {
  return from(rows(), cols(), std::vector<double>(node_->value.begin(), node_->value.end()), false);
}

void Tensor::backward() const {
  if (size() != 1) throw ShapeError("backward: root " + shape_str() + " is not a scalar");
  if (!node_->requires_grad) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{node_.get()};
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second) continue;
    order.push_back(n);
    for (const auto& p : n->parents) {
      if (p->requires_grad) stack.push_back(p.get());
    }
  }
  std::sort(order.begin(), order.end(), [](const Node* a, const Node* b) { return a->seq > b->seq; });

  node_->ensure_grad();
  node_->grad[0] += 1.0;
  for (Node* n : order) {
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

}  // namespace ectg::nn
