// Copyright 2026 The tlm Authors
// Licensed under the Apache License, Version 2.0
//
// Central finite-difference gradient oracle, independent of the autodiff
// path it checks. Operates in double precision with the step the gradient
// contracts are stated for.

#ifndef TLM_TESTS_FINITE_DIFF_HPP_
#define TLM_TESTS_FINITE_DIFF_HPP_

#include <cmath>
#include <functional>
#include <vector>

#include "tlm/tensor.hpp"

namespace tlm::testing {

inline constexpr double kFdStep = 1e-5;
inline constexpr double kFdTol = 1e-4;

// Relative error with a unit floor so near-zero gradients compare absolutely.
inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1.0});
}

// Central differences of scalar-valued `eval` with respect to every element
// of `inputs`, which eval reads each call.
inline std::vector<std::vector<double>> central_differences(
    const std::function<double()>& eval, std::vector<Tensor<double>*> inputs,
    double step = kFdStep) {
  std::vector<std::vector<double>> grads;
  for (Tensor<double>* t : inputs) {
    std::vector<double> g(t->values.size());
    for (size_t i = 0; i < t->values.size(); ++i) {
      const double saved = t->values[i];
      t->values[i] = saved + step;
      const double fp = eval();
      t->values[i] = saved - step;
      const double fm = eval();
      t->values[i] = saved;
      g[i] = (fp - fm) / (2.0 * step);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

// Max relative error between analytic gradients and central differences.
// `eval` must rebuild its computation from the current input values;
// `analytic` holds the gradients produced by one backward pass.
inline double max_grad_error(const std::function<double()>& eval,
                             std::vector<Tensor<double>*> inputs,
                             const std::vector<std::vector<double>>& analytic) {
  const auto fd = central_differences(eval, inputs);
  double worst = 0.0;
  for (size_t t = 0; t < inputs.size(); ++t) {
    for (size_t i = 0; i < fd[t].size(); ++i) {
      worst = std::max(worst, rel_err(analytic[t][i], fd[t][i]));
    }
  }
  return worst;
}

}  // namespace tlm::testing

#endif  // TLM_TESTS_FINITE_DIFF_HPP_
