// SPDX-License-Identifier: Apache-2.0
#include "afd/featnorm.hpp"

#include "afd/error.hpp"

namespace afd {
namespace {

void check_batch(const Tensor& x, double epsilon) {
  if (x.rank() != 4) {
    throw ShapeMismatch("normalize_features expects [N,C,H,W], got " +
                        shape_str(x.shape()));
  }
  if (x.dim(0) * x.dim(2) * x.dim(3) < 2) {
    throw DegenerateBatch("need at least two values per channel");
  }
  if (!(epsilon > 0.0)) throw DomainError("epsilon must be positive");
}

}  // namespace

NormStats norm_stats(const Tensor& x, double epsilon) {
  check_batch(x, epsilon);
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  const double m = static_cast<double>(n * hw);
  NormStats s;
  s.epsilon = epsilon;
  s.mean.assign(c, 0.0);
  s.variance.assign(c, 0.0);
  const auto d = x.data();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t i = 0; i < hw; ++i) s.mean[ch] += d[(b * c + ch) * hw + i];
    }
  }
  for (double& v : s.mean) v /= m;
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t i = 0; i < hw; ++i) {
        const double dv = d[(b * c + ch) * hw + i] - s.mean[ch];
        s.variance[ch] += dv * dv;
      }
    }
  }
  for (double& v : s.variance) v /= m;
  return s;
}

Tensor normalize_features(const Tensor& x, double epsilon) {
  check_batch(x, epsilon);
  const std::vector<std::size_t> stat_axes{0, 2, 3};
  Tensor centered = x - expand(mean(x, stat_axes), x.shape(), stat_axes);
  Tensor var = mean(square(centered), stat_axes);
  Tensor stddev = expand(sqrt(var + epsilon), x.shape(), stat_axes);
  return centered / stddev;
}

}  // namespace afd
