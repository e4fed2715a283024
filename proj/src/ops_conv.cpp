// SPDX-License-Identifier: Apache-2.0
#include <Eigen/Core>

#include "afd/error.hpp"
#include "afd/tensor.hpp"

namespace afd {
namespace {

using detail::Node;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

struct ConvGeom {
  std::size_t n, cin, h, w, cout, k, stride, pad, ho, wo;
  std::size_t rows() const { return cin * k * k; }
  std::size_t cols() const { return ho * wo; }
  bool pointwise() const { return k == 1 && stride == 1 && pad == 0; }
};

void im2col(const double* x, const ConvGeom& g, double* col) {
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        double* row = col + ((ci * g.k + ky) * g.k + kx) * g.cols();
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<long>(g.h) &&
                                ix < static_cast<long>(g.w);
            row[oy * g.wo + ox] = inside ? x[(ci * g.h + iy) * g.w + ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const double* col, const ConvGeom& g, double* dx) {
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const double* row = col + ((ci * g.k + ky) * g.k + kx) * g.cols();
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            if (ix < 0 || ix >= static_cast<long>(g.w)) continue;
            dx[(ci * g.h + iy) * g.w + ix] += row[oy * g.wo + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b,
              std::size_t stride, std::size_t pad) {
  if (x.rank() != 4 || w.rank() != 4 || b.rank() != 1) {
    throw ShapeMismatch("conv2d expects x[N,C,H,W], w[O,C,k,k], b[O]");
  }
  if (w.dim(1) != x.dim(1) || w.dim(2) != w.dim(3) || b.dim(0) != w.dim(0)) {
    throw ShapeMismatch("conv2d: x " + shape_str(x.shape()) + ", w " +
                        shape_str(w.shape()) + ", b " + shape_str(b.shape()));
  }
  if (stride == 0) throw ShapeMismatch("conv2d stride must be positive");
  ConvGeom g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2),
             stride, pad, 0, 0};
  if (g.h + 2 * pad < g.k || g.w + 2 * pad < g.k) {
    throw ShapeMismatch("conv2d kernel larger than padded input");
  }
  g.ho = (g.h + 2 * pad - g.k) / stride + 1;
  g.wo = (g.w + 2 * pad - g.k) / stride + 1;

  const std::size_t in_plane = g.cin * g.h * g.w;
  const std::size_t out_plane = g.cout * g.cols();
  std::vector<double> out(g.n * out_plane);
  std::vector<double> col(g.pointwise() ? 0 : g.rows() * g.cols());
  ConstMapMat W(w.data().data(), g.cout, g.rows());
  const auto bias = b.data();
  for (std::size_t n = 0; n < g.n; ++n) {
    const double* xn = x.data().data() + n * in_plane;
    const double* cptr = xn;
    if (!g.pointwise()) {
      im2col(xn, g, col.data());
      cptr = col.data();
    }
    ConstMapMat C(cptr, g.rows(), g.cols());
    MapMat O(out.data() + n * out_plane, g.cout, g.cols());
    O.noalias() = W * C;
    for (std::size_t co = 0; co < g.cout; ++co) O.row(co).array() += bias[co];
  }

  Shape shape{g.n, g.cout, g.ho, g.wo};
  return make_result(std::move(shape), std::move(out), {x, w, b}, [g](Node& self) {
    Node& X = *self.inputs[0];
    Node& Wt = *self.inputs[1];
    Node& B = *self.inputs[2];
    const std::size_t in_plane = g.cin * g.h * g.w;
    const std::size_t out_plane = g.cout * g.cols();
    ConstMapMat Wm(Wt.data.data(), g.cout, g.rows());
    std::vector<double> col(g.pointwise() ? 0 : g.rows() * g.cols());
    std::vector<double> dcol(g.rows() * g.cols());
    for (std::size_t n = 0; n < g.n; ++n) {
      ConstMapMat G(self.grad.data() + n * out_plane, g.cout, g.cols());
      if (B.requires_grad) {
        auto& gb = B.grad_buffer();
        for (std::size_t co = 0; co < g.cout; ++co) gb[co] += G.row(co).sum();
      }
      if (Wt.requires_grad) {
        const double* cptr = X.data.data() + n * in_plane;
        if (!g.pointwise()) {
          im2col(cptr, g, col.data());
          cptr = col.data();
        }
        ConstMapMat C(cptr, g.rows(), g.cols());
        MapMat GW(Wt.grad_buffer().data(), g.cout, g.rows());
        GW.noalias() += G * C.transpose();
      }
      if (X.requires_grad) {
        double* dx = X.grad_buffer().data() + n * in_plane;
        if (g.pointwise()) {
          MapMat DX(dx, g.rows(), g.cols());
          DX.noalias() += Wm.transpose() * G;
        } else {
          MapMat DC(dcol.data(), g.rows(), g.cols());
          DC.noalias() = Wm.transpose() * G;
          col2im(dcol.data(), g, dx);
        }
      }
    }
  });
}

}  // namespace afd
