// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <limits>

#include "afd/error.hpp"
#include "afd/tensor.hpp"

namespace afd {
namespace {

using detail::Node;

struct ReduceMap {
  Shape out_shape;
  std::vector<std::size_t> index;  // input flat index -> output flat index
  std::size_t count = 1;           // elements folded into each output
};

std::vector<bool> axis_flags(std::size_t rank,
                             const std::vector<std::size_t>& axes) {
  if (axes.empty()) throw InvalidAxis("empty axis set");
  std::vector<bool> flags(rank, false);
  for (std::size_t a : axes) {
    if (a >= rank) {
      throw InvalidAxis("axis " + std::to_string(a) + " for rank " +
                        std::to_string(rank));
    }
    if (flags[a]) throw InvalidAxis("duplicate axis " + std::to_string(a));
    flags[a] = true;
  }
  return flags;
}

ReduceMap reduce_map(const Shape& shape, const std::vector<std::size_t>& axes) {
  const auto flags = axis_flags(shape.size(), axes);
  ReduceMap m;
  Shape out_strides;
  for (std::size_t d = 0; d < shape.size(); ++d) {
    if (flags[d]) {
      m.count *= shape[d];
    } else {
      m.out_shape.push_back(shape[d]);
    }
  }
  // Stride of each input axis within the output layout (0 for reduced axes).
  std::vector<std::size_t> stride(shape.size(), 0);
  std::size_t s = 1;
  for (std::size_t d = shape.size(); d-- > 0;) {
    if (!flags[d]) {
      stride[d] = s;
      s *= shape[d];
    }
  }
  const std::size_t n = numel_of(shape);
  m.index.resize(n);
  std::vector<std::size_t> idx(shape.size(), 0);
  std::size_t out = 0;
  for (std::size_t i = 0; i < n; ++i) {
    m.index[i] = out;
    for (std::size_t d = shape.size(); d-- > 0;) {
      ++idx[d];
      out += stride[d];
      if (idx[d] < shape[d]) break;
      out -= stride[d] * idx[d];
      idx[d] = 0;
    }
  }
  return m;
}

Tensor reduce_sum(const Tensor& x, const std::vector<std::size_t>& axes,
                  double factor) {
  ReduceMap m = reduce_map(x.shape(), axes);
  std::vector<double> out(numel_of(m.out_shape), 0.0);
  const auto& in = x.node()->data;
  for (std::size_t i = 0; i < in.size(); ++i) out[m.index[i]] += in[i];
  if (factor != 1.0) {
    for (double& v : out) v *= factor;
  }
  auto index = std::make_shared<std::vector<std::size_t>>(std::move(m.index));
  return make_result(std::move(m.out_shape), std::move(out), {x},
                     [index, factor](Node& self) {
                       Node& in = *self.inputs[0];
                       auto& g = in.grad_buffer();
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         g[i] += factor * self.grad[(*index)[i]];
                       }
                     });
}

}  // namespace

Tensor sum(const Tensor& x, const std::vector<std::size_t>& axes) {
  return reduce_sum(x, axes, 1.0);
}

Tensor mean(const Tensor& x, const std::vector<std::size_t>& axes) {
  const auto flags = axis_flags(x.rank(), axes);
  std::size_t count = 1;
  for (std::size_t d = 0; d < x.rank(); ++d) {
    if (flags[d]) count *= x.dim(d);
  }
  if (count == 0) throw InvalidAxis("mean over an empty extent");
  return reduce_sum(x, axes, 1.0 / static_cast<double>(count));
}

Tensor sum_all(const Tensor& x) {
  if (x.rank() == 0) return x;
  std::vector<std::size_t> axes(x.rank());
  for (std::size_t d = 0; d < axes.size(); ++d) axes[d] = d;
  return sum(x, axes);
}

Tensor expand(const Tensor& x, const Shape& shape,
              const std::vector<std::size_t>& axes) {
  ReduceMap m = reduce_map(shape, axes);
  if (m.out_shape != x.shape()) {
    throw ShapeMismatch("expand " + shape_str(x.shape()) + " to " +
                        shape_str(shape));
  }
  const auto& in = x.node()->data;
  std::vector<double> out(m.index.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[m.index[i]];
  auto index = std::make_shared<std::vector<std::size_t>>(std::move(m.index));
  return make_result(shape, std::move(out), {x}, [index](Node& self) {
    Node& in = *self.inputs[0];
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      g[(*index)[i]] += self.grad[i];
    }
  });
}

Tensor softmax(const Tensor& x, const std::vector<std::size_t>& axes,
               const std::optional<Tensor>& support) {
  ReduceMap m = reduce_map(x.shape(), axes);
  const auto& in = x.node()->data;
  const std::size_t groups = numel_of(m.out_shape);
  if (support && support->shape() != x.shape()) {
    throw ShapeMismatch("softmax support " + shape_str(support->shape()) +
                        " vs " + shape_str(x.shape()));
  }
  auto active = [&](std::size_t i) {
    return !support || support->data()[i] != 0.0;
  };

  std::vector<double> mx(groups, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (active(i)) mx[m.index[i]] = std::max(mx[m.index[i]], in[i]);
  }
  for (double v : mx) {
    if (std::isinf(v)) throw EmptyRegion("softmax slice has empty support");
  }
  std::vector<double> out(in.size(), 0.0);
  std::vector<double> den(groups, 0.0);
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (!active(i)) continue;
    out[i] = std::exp(in[i] - mx[m.index[i]]);
    den[m.index[i]] += out[i];
  }
  for (std::size_t i = 0; i < in.size(); ++i) out[i] /= den[m.index[i]];

  auto index = std::make_shared<std::vector<std::size_t>>(std::move(m.index));
  return make_result(x.shape(), std::move(out), {x}, [index, groups](Node& self) {
    // dx_i = y_i (g_i - sum_j g_j y_j); cells outside support have y = 0.
    const auto& y = self.data;
    const auto& g = self.grad;
    std::vector<double> dot(groups, 0.0);
    for (std::size_t i = 0; i < y.size(); ++i) dot[(*index)[i]] += g[i] * y[i];
    auto& gi = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < y.size(); ++i) {
      gi[i] += y[i] * (g[i] - dot[(*index)[i]]);
    }
  });
}

Tensor log_softmax(const Tensor& x, const std::vector<std::size_t>& axes) {
  ReduceMap m = reduce_map(x.shape(), axes);
  const auto& in = x.node()->data;
  const std::size_t groups = numel_of(m.out_shape);
  std::vector<double> mx(groups, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < in.size(); ++i) {
    mx[m.index[i]] = std::max(mx[m.index[i]], in[i]);
  }
  std::vector<double> den(groups, 0.0);
  for (std::size_t i = 0; i < in.size(); ++i) {
    den[m.index[i]] += std::exp(in[i] - mx[m.index[i]]);
  }
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    out[i] = in[i] - mx[m.index[i]] - std::log(den[m.index[i]]);
  }
  auto index = std::make_shared<std::vector<std::size_t>>(std::move(m.index));
  return make_result(x.shape(), std::move(out), {x}, [index, groups](Node& self) {
    // dx_i = g_i - softmax_i * sum_j g_j
    const auto& y = self.data;
    const auto& g = self.grad;
    std::vector<double> total(groups, 0.0);
    for (std::size_t i = 0; i < y.size(); ++i) total[(*index)[i]] += g[i];
    auto& gi = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < y.size(); ++i) {
      gi[i] += g[i] - std::exp(y[i]) * total[(*index)[i]];
    }
  });
}

}  // namespace afd
