// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include "afd/error.hpp"
#include "afd/tensor.hpp"

namespace afd {
namespace {

using detail::Node;

// Operand access for binary ops: a rank-0 operand broadcasts.
struct Operand {
  const std::vector<double>& v;
  bool scalar;
  double operator[](std::size_t i) const { return scalar ? v[0] : v[i]; }
};

Shape binary_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return a.shape();
  if (b.rank() == 0) return a.shape();
  if (a.rank() == 0) return b.shape();
  throw ShapeMismatch(std::string(op) + ": " + shape_str(a.shape()) + " vs " +
                      shape_str(b.shape()));
}

// Adds g[i] * d(i) into input k's gradient, reducing over i when that input
// was broadcast from a scalar.
template <class Deriv>
void accumulate(Node& out, std::size_t k, Deriv d) {
  Node& in = *out.inputs[k];
  if (!in.requires_grad) return;
  auto& g = in.grad_buffer();
  const auto& go = out.grad;
  if (g.size() == 1 && go.size() != 1) {
    double s = 0.0;
    for (std::size_t i = 0; i < go.size(); ++i) s += go[i] * d(i);
    g[0] += s;
  } else {
    for (std::size_t i = 0; i < go.size(); ++i) g[i] += go[i] * d(i);
  }
}

template <class F, class DA, class DB>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, F f, DA da,
              DB db) {
  Shape shape = binary_shape(a, b, name);
  const std::size_t n = numel_of(shape);
  Operand av{a.node()->data, a.rank() == 0 && n != 1};
  Operand bv{b.node()->data, b.rank() == 0 && n != 1};
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(av[i], bv[i]);
  return make_result(std::move(shape), std::move(out), {a, b},
                     [da, db, n](Node& self) {
                       const auto& A = self.inputs[0]->data;
                       const auto& B = self.inputs[1]->data;
                       Operand x{A, A.size() == 1 && n != 1};
                       Operand y{B, B.size() == 1 && n != 1};
                       accumulate(self, 0, [&](std::size_t i) { return da(x[i], y[i]); });
                       accumulate(self, 1, [&](std::size_t i) { return db(x[i], y[i]); });
                     });
}

// f(x) forward, d(x, y) derivative given input x and output y.
template <class F, class D>
Tensor unary(const Tensor& x, F f, D d) {
  const auto& in = x.node()->data;
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return make_result(x.shape(), std::move(out), {x}, [d](Node& self) {
    const auto& X = self.inputs[0]->data;
    const auto& Y = self.data;
    accumulate(self, 0, [&](std::size_t i) { return d(X[i], Y[i]); });
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  for (double v : b.data()) {
    if (v == 0.0) throw DomainError("division by zero");
  }
  return binary(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

// Ties route the gradient to the first operand.
Tensor minimum(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "minimum", [](double x, double y) { return std::min(x, y); },
      [](double x, double y) { return x <= y ? 1.0 : 0.0; },
      [](double x, double y) { return x <= y ? 0.0 : 1.0; });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "maximum", [](double x, double y) { return std::max(x, y); },
      [](double x, double y) { return x >= y ? 1.0 : 0.0; },
      [](double x, double y) { return x >= y ? 0.0 : 1.0; });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      x, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double value) {
  return unary(
      x, [value](double v) { return v + value; },
      [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& x) { return scale(x, -1.0); }

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor abs(const Tensor& x) {
  return unary(
      x, [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor square(const Tensor& x) {
  return unary(
      x, [](double v) { return v * v; },
      [](double v, double) { return 2.0 * v; });
}

Tensor sqrt(const Tensor& x) {
  for (double v : x.data()) {
    if (v < 0.0) throw DomainError("sqrt of negative value");
  }
  return unary(
      x, [](double v) { return std::sqrt(v); },
      [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Tensor sqrt_clamped(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? std::sqrt(v) : 0.0; },
      [](double v, double y) { return v > 0.0 ? 0.5 / y : 0.0; });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > 0.0)) throw DomainError("log of non-positive value");
  }
  return unary(
      x, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor softplus(const Tensor& x) {
  return unary(
      x,
      [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::fabs(v))); },
      [](double v, double) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      });
}

Tensor smooth_l1(const Tensor& x, double beta) {
  return unary(
      x,
      [beta](double v) {
        const double a = std::fabs(v);
        return a < beta ? 0.5 * v * v / beta : a - 0.5 * beta;
      },
      [beta](double v, double) {
        const double a = std::fabs(v);
        if (a < beta) return v / beta;
        return v > 0.0 ? 1.0 : -1.0;
      });
}

}  // namespace afd
