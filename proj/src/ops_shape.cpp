// SPDX-License-Identifier: Apache-2.0
#include <algorithm>

#include "afd/error.hpp"
#include "afd/tensor.hpp"

namespace afd {
namespace {

using detail::Node;

std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> s(shape.size(), 1);
  for (std::size_t d = shape.size(); d-- > 1;) s[d - 1] = s[d] * shape[d];
  return s;
}

// Gather op: out[i] = in[src[i]]; backward scatters.
Tensor gather(const Tensor& x, Shape shape, std::vector<std::size_t> src) {
  const auto& in = x.node()->data;
  std::vector<double> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = in[src[i]];
  auto index = std::make_shared<std::vector<std::size_t>>(std::move(src));
  return make_result(std::move(shape), std::move(out), {x}, [index](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      g[(*index)[i]] += self.grad[i];
    }
  });
}

}  // namespace

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel_of(shape) != x.numel()) {
    throw ShapeMismatch("reshape " + shape_str(x.shape()) + " to " +
                        shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result(std::move(shape), std::move(out), {x}, [](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm) {
  const std::size_t r = x.rank();
  if (perm.size() != r) throw InvalidAxis("permutation rank mismatch");
  std::vector<bool> used(r, false);
  for (std::size_t p : perm) {
    if (p >= r || used[p]) throw InvalidAxis("invalid permutation");
    used[p] = true;
  }
  Shape out_shape(r);
  for (std::size_t d = 0; d < r; ++d) out_shape[d] = x.dim(perm[d]);
  const auto in_strides = strides_of(x.shape());
  const std::size_t n = x.numel();
  std::vector<std::size_t> src(n);
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t s = 0;
    for (std::size_t d = 0; d < r; ++d) s += idx[d] * in_strides[perm[d]];
    src[i] = s;
    for (std::size_t d = r; d-- > 0;) {
      if (++idx[d] < out_shape[d]) break;
      idx[d] = 0;
    }
  }
  return gather(x, std::move(out_shape), std::move(src));
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin,
             std::size_t end) {
  if (axis >= x.rank()) throw InvalidAxis("slice axis out of range");
  if (begin >= end || end > x.dim(axis)) {
    throw ShapeMismatch("slice [" + std::to_string(begin) + "," +
                        std::to_string(end) + ") of extent " +
                        std::to_string(x.dim(axis)));
  }
  Shape out_shape = x.shape();
  out_shape[axis] = end - begin;
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= x.dim(d);
  for (std::size_t d = axis + 1; d < x.rank(); ++d) inner *= x.dim(d);
  const std::size_t len = end - begin;
  std::vector<std::size_t> src;
  src.reserve(outer * len * inner);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t a = begin; a < end; ++a) {
      const std::size_t base = (o * x.dim(axis) + a) * inner;
      for (std::size_t i = 0; i < inner; ++i) src.push_back(base + i);
    }
  }
  return gather(x, std::move(out_shape), std::move(src));
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeMismatch("concat of nothing");
  const Shape& ref = parts.front().shape();
  if (axis >= ref.size()) throw InvalidAxis("concat axis out of range");
  Shape out_shape = ref;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (s.size() != ref.size()) throw ShapeMismatch("concat rank mismatch");
    s[axis] = ref[axis];
    if (s != ref) throw ShapeMismatch("concat shape mismatch");
    out_shape[axis] += p.dim(axis);
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= ref[d];
  for (std::size_t d = axis + 1; d < ref.size(); ++d) inner *= ref[d];

  std::vector<double> out;
  out.reserve(numel_of(out_shape));
  for (std::size_t o = 0; o < outer; ++o) {
    for (const auto& p : parts) {
      const std::size_t chunk = p.dim(axis) * inner;
      const auto d = p.data();
      out.insert(out.end(), d.begin() + o * chunk, d.begin() + (o + 1) * chunk);
    }
  }
  std::vector<std::size_t> extents;
  for (const auto& p : parts) extents.push_back(p.dim(axis) * inner);
  return make_result(
      std::move(out_shape), std::move(out), parts,
      [extents, outer](Node& self) {
        std::size_t pos = 0;
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t k = 0; k < extents.size(); ++k) {
            Node& in = *self.inputs[k];
            if (in.requires_grad) {
              auto& g = in.grad_buffer();
              for (std::size_t i = 0; i < extents[k]; ++i) {
                g[o * extents[k] + i] += self.grad[pos + i];
              }
            }
            pos += extents[k];
          }
        }
      });
}

}  // namespace afd
