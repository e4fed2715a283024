// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "afd/tensor.hpp"

namespace afd {

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every element
/// of the leaf `x`. `x` is restored before returning.
std::vector<double> finite_diff_grad(const std::function<double()>& f,
                                     Tensor& x, double h);

/// |a - b| / max(|a|, |b|, floor). The floor keeps round-off on near-zero
/// gradients from reading as a large relative error.
double relative_error(double a, double b, double floor = 1e-3);

struct GradCheckResult {
  std::string name;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  double max_rel_error = 0.0;
  bool passed = true;
};

/// Compares backward() against central differences for every leaf in
/// `params`. `loss` rebuilds the graph from the current leaf values.
/// Elements for which `skip(param_index, element)` is true are not compared.
GradCheckResult check_gradients(
    const std::string& name, const std::function<Tensor()>& loss,
    std::vector<Tensor> params, double h, double tolerance,
    const std::function<bool(std::size_t, std::size_t)>& skip = {});

/// True when `f` is not smooth inside [x_i - h, x_i + h]: the forward and
/// backward one-sided differences disagree by more than `tolerance`
/// (relative, same floor as relative_error). A central difference across a
/// kink is not a gradient reference, so such elements are skipped.
bool straddles_kink(const std::function<double()>& f, Tensor& x, std::size_t i, double h,
                    double tolerance);

}  // namespace afd
