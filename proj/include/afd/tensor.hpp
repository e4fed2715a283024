// SPDX-License-Identifier: Apache-2.0
//
// Dense float64 tensors with tape-based reverse-mode differentiation.
//
// Every op that has at least one input with requires_grad() records a node
// holding its inputs and a backward closure. backward() on a scalar sorts the
// recorded graph topologically (the tape) and visits each node exactly once in
// reverse order. Shapes never broadcast implicitly: binary ops require equal
// shapes, or a rank-0 operand. Use expand() to broadcast explicitly.
#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace afd {

using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this->grad and accumulates into inputs[k]->grad.
  std::function<void(Node&)> backward_fn;

  std::vector<double>& grad_buffer();
};

}  // namespace detail

class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const double> data() const { return node_->data; }
  double operator[](std::size_t i) const { return node_->data[i]; }
  double item() const;

  // Leaf-only write access (optimizer updates, finite-difference probes).
  std::vector<double>& mutable_data();

  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->inputs.empty(); }
  std::vector<double> grad() const;
  void zero_grad();

  Tensor detach() const;
  void backward() const;

  // Internal: used by op implementations.
  const std::shared_ptr<detail::Node>& node() const { return node_; }
  static Tensor from_node(std::shared_ptr<detail::Node> node);

 private:
  std::shared_ptr<detail::Node> node_;
};

// Builds the result tensor of an op. When any input requires grad the result
// is recorded with `backward_fn`; otherwise the closure is dropped.
Tensor make_result(Shape shape, std::vector<double> data,
                   std::vector<Tensor> inputs,
                   std::function<void(detail::Node&)> backward_fn);

// ---- elementwise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor minimum(const Tensor& a, const Tensor& b);
Tensor maximum(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);
Tensor neg(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor square(const Tensor& x);
Tensor sqrt(const Tensor& x);
// sqrt(max(x, 0)) with gradient 0 wherever x <= 0.
Tensor sqrt_clamped(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sigmoid(const Tensor& x);
// log(1 + e^x), evaluated stably.
Tensor softplus(const Tensor& x);
Tensor smooth_l1(const Tensor& x, double beta = 1.0);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& x) { return neg(x); }
inline Tensor operator*(const Tensor& x, double c) { return scale(x, c); }
inline Tensor operator*(double c, const Tensor& x) { return scale(x, c); }
inline Tensor operator+(const Tensor& x, double c) { return add_scalar(x, c); }
inline Tensor operator-(const Tensor& x, double c) { return add_scalar(x, -c); }
inline Tensor operator+(double c, const Tensor& x) { return add_scalar(x, c); }
inline Tensor operator-(double c, const Tensor& x) { return add_scalar(neg(x), c); }

// ---- reductions / softmax -------------------------------------------------

Tensor sum(const Tensor& x, const std::vector<std::size_t>& axes);
Tensor mean(const Tensor& x, const std::vector<std::size_t>& axes);
Tensor sum_all(const Tensor& x);

// Softmax over the joint set of `axes`, max-subtracted. With `support`
// (same shape as x, entries 0/1) the softmax is restricted to support cells;
// cells outside get exactly 0. Every slice must have a nonempty support.
Tensor softmax(const Tensor& x, const std::vector<std::size_t>& axes,
               const std::optional<Tensor>& support = std::nullopt);
Tensor log_softmax(const Tensor& x, const std::vector<std::size_t>& axes);

// Inverse of a reduction: x.shape() must equal `shape` with `axes` removed.
// Values are replicated along the inserted axes.
Tensor expand(const Tensor& x, const Shape& shape,
              const std::vector<std::size_t>& axes);

// ---- shape ----------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin,
             std::size_t end);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);

// ---- convolution ----------------------------------------------------------

// Cross-correlation. x: [N,Cin,H,W], w: [Cout,Cin,k,k], b: [Cout].
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b,
              std::size_t stride, std::size_t pad);

}  // namespace afd
