// SPDX-License-Identifier: Apache-2.0
#include "afd/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace afd {

std::vector<double> finite_diff_grad(const std::function<double()>& f,
                                     Tensor& x, double h) {
  auto& data = x.mutable_data();
  std::vector<double> grad(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double orig = data[i];
    data[i] = orig + h;
    const double fp = f();
    data[i] = orig - h;
    const double fm = f();
    data[i] = orig;
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

double relative_error(double a, double b, double floor) {
  const double denom = std::max({std::fabs(a), std::fabs(b), floor});
  return std::fabs(a - b) / denom;
}

bool straddles_kink(const std::function<double()>& f, Tensor& x, std::size_t i, double h,
                    double tolerance) {
  double& v = x.mutable_data()[i];
  const double orig = v;
  const double f0 = f();
  v = orig + h;
  const double fp = f();
  v = orig - h;
  const double fm = f();
  v = orig;
  return relative_error((fp - f0) / h, (f0 - fm) / h) > tolerance;
}

GradCheckResult check_gradients(
    const std::string& name, const std::function<Tensor()>& loss,
    std::vector<Tensor> params, double h, double tolerance,
    const std::function<bool(std::size_t, std::size_t)>& skip) {
  for (auto& p : params) p.zero_grad();
  loss().backward();
  std::vector<std::vector<double>> analytic;
  for (const auto& p : params) analytic.push_back(p.grad());

  GradCheckResult r;
  r.name = name;
  auto f = [&] { return loss().item(); };
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto numeric = finite_diff_grad(f, params[k], h);
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      if (skip && skip(k, i)) {
        ++r.skipped;
        continue;
      }
      const double e = relative_error(analytic[k][i], numeric[i]);
      r.max_rel_error = std::max(r.max_rel_error, e);
      ++r.checked;
    }
  }
  r.passed = r.max_rel_error < tolerance;
  for (auto& p : params) p.zero_grad();
  return r;
}

}  // namespace afd
