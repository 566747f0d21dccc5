// Copyright Contributors to the gaussworld Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>

#include "gaussworld/core/autodiff.hpp"

namespace gw::testing {

struct GradCheckResult {
  double max_rel_err = 0.0;
  i64 checked = 0;
};

/// Central-difference check of d(loss)/d(leaf) for one leaf tensor.
/// `build` must construct the full graph from scratch (leaves included)
/// and return the scalar loss; `leaf_values` is perturbed in place.
inline GradCheckResult gradcheck(
    std::function<double(const std::vector<Tensor<double>>&,
                         std::vector<Tensor<double>>*)>
        eval,
    std::vector<Tensor<double>> leaves, double h = 1e-4,
    double denom_floor = 1e-6) {
  // Analytic gradients
  std::vector<Tensor<double>> grads;
  eval(leaves, &grads);
  GradCheckResult res;
  for (size_t li = 0; li < leaves.size(); ++li) {
    for (i64 i = 0; i < leaves[li].numel(); ++i) {
      const double orig = leaves[li][i];
      leaves[li][i] = orig + h;
      const double fp = eval(leaves, nullptr);
      leaves[li][i] = orig - h;
      const double fm = eval(leaves, nullptr);
      leaves[li][i] = orig;
      const double num = (fp - fm) / (2 * h);
      const double ana = grads[li][i];
      const double denom = std::max({std::abs(num), std::abs(ana), denom_floor});
      const double rel = std::abs(num - ana) / denom;
      if (std::abs(num) < 1e-7 && std::abs(ana) < 1e-7) continue;
      res.max_rel_err = std::max(res.max_rel_err, rel);
      ++res.checked;
    }
  }
  return res;
}

/// Convenience wrapper for graphs expressed over ad::Var leaves.
inline GradCheckResult gradcheck_graph(
    std::function<ad::Var<double>(const std::vector<ad::Var<double>>&)> build,
    std::vector<Tensor<double>> leaf_values, double h = 1e-4) {
  auto eval = [&build](const std::vector<Tensor<double>>& vals,
                       std::vector<Tensor<double>>* grads) -> double {
    std::vector<ad::Var<double>> leaves;
    leaves.reserve(vals.size());
    for (const auto& v : vals) leaves.push_back(ad::leaf(v));
    auto loss = build(leaves);
    if (grads) {
      ad::backward(loss);
      grads->clear();
      for (auto& l : leaves) grads->push_back(ad::grad_of(l));
    }
    return loss->value[0];
  };
  return gradcheck(eval, std::move(leaf_values), h);
}

}  // namespace gw::testing
