// SPDX-License-Identifier: Apache-2.0
#include "afd/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "afd/error.hpp"

namespace afd {

std::size_t numel_of(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::vector<double>& detail::Node::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor::Tensor() : Tensor(Shape{}, {0.0}) {}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : node_(std::make_shared<detail::Node>()) {
  if (numel_of(shape) != data.size()) {
    throw ShapeMismatch("shape " + shape_str(shape) + " holds " +
                        std::to_string(numel_of(shape)) + " values, got " +
                        std::to_string(data.size()));
  }
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = numel_of(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, {value}, requires_grad);
}

Tensor Tensor::from_node(std::shared_ptr<detail::Node> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

double Tensor::item() const {
  if (numel() != 1) throw NotScalar("item() on shape " + shape_str(shape()));
  return node_->data[0];
}

std::vector<double>& Tensor::mutable_data() {
  if (!is_leaf()) throw Error("mutable_data() is only available on leaves");
  return node_->data;
}

std::vector<double> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<double>(numel(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::detach() const {
  return Tensor(node_->shape, node_->data, false);
}

void Tensor::backward() const {
  if (numel() != 1) {
    throw NotScalar("backward() needs a scalar, got " + shape_str(shape()));
  }
  if (!requires_grad()) {
    throw DetachedTensor("loss is not connected to any requires_grad leaf");
  }

  // Iterative post-order DFS; inputs are visited in declaration order so the
  // resulting tape is deterministic.
  std::vector<detail::Node*> tape;
  std::unordered_set<const detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      detail::Node* child = n->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      tape.push_back(n);
      stack.pop_back();
    }
  }

  node_->grad_buffer()[0] += 1.0;
  for (auto it = tape.rbegin(); it != tape.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
  // Intermediate gradients are not retained.
  for (detail::Node* n : tape) {
    if (!n->inputs.empty()) n->grad.clear();
  }
}

Tensor make_result(Shape shape, std::vector<double> data,
                   std::vector<Tensor> inputs,
                   std::function<void(detail::Node&)> backward_fn) {
  for (double v : data) {
    if (!std::isfinite(v)) {
      throw DomainError("op produced a non-finite value");
    }
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  bool any = false;
  for (const auto& t : inputs) any = any || t.requires_grad();
  if (any) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (const auto& t : inputs) node->inputs.push_back(t.node());
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor::from_node(std::move(node));
}

}  // namespace afd
