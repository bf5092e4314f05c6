// Copyright 2026 The tlm Authors
// Licensed under the Apache License, Version 2.0

#ifndef TLM_ADAM_HPP_
#define TLM_ADAM_HPP_

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "tlm/tensor.hpp"

namespace tlm {

// First/second moment buffers for one parameter set, aligned index-for-index
// with the parameter tensors they were created from.
template <typename T>
struct AdamState {
  int64_t step = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;

  static AdamState zeros_like(const std::vector<Tensor<T>>& params) {
    AdamState s;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const auto& p : params) {
      s.m.emplace_back(p.values.size(), T(0));
      s.v.emplace_back(p.values.size(), T(0));
    }
    return s;
  }
};

// One bias-corrected Adam update over every tensor. Gradients must be
// populated and finite; a non-finite gradient aborts the step since it
// signals divergence upstream.
template <typename T>
void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& state, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw std::invalid_argument("adam_step: state tracks " +
                                std::to_string(state.m.size()) + " tensors, params have " +
                                std::to_string(params.size()));
  }
  for (size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].size() != params[i].values.size()) {
      throw std::invalid_argument("adam_step: moment buffer " + std::to_string(i) +
                                  " does not match parameter shape");
    }
    params[i].ensure_grad();
    for (T gv : params[i].grad) {
      if (!std::isfinite(static_cast<double>(gv))) {
        throw std::runtime_error("adam_step: non-finite gradient in tensor " +
                                 std::to_string(i) + " (training diverged)");
      }
    }
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    T* w = params[i].values.data();
    const T* g = params[i].grad.data();
    T* m = state.m[i].data();
    T* v = state.v[i].data();
    const int64_t n = params[i].numel();
#pragma omp parallel for schedule(static)
    for (int64_t j = 0; j < n; ++j) {
      m[j] = T(beta1) * m[j] + T(1.0 - beta1) * g[j];
      v[j] = T(beta2) * v[j] + T(1.0 - beta2) * g[j] * g[j];
      const double mhat = static_cast<double>(m[j]) / bc1;
      const double vhat = static_cast<double>(v[j]) / bc2;
      w[j] -= T(lr * mhat / (std::sqrt(vhat) + eps));
    }
  }
}

// Scales gradients so their global L2 norm is at most max_norm; returns the
// pre-clip norm. Never increases the norm.
template <typename T>
double clip_grad_norm(std::vector<Tensor<T>>& params, double max_norm) {
  double sq = 0.0;
  for (auto& p : params) {
    p.ensure_grad();
    for (T gv : p.grad) sq += static_cast<double>(gv) * static_cast<double>(gv);
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const T factor = T(max_norm / norm);
    for (auto& p : params) {
      for (auto& gv : p.grad) gv *= factor;
    }
  }
  return norm;
}

}  // namespace tlm

#endif  // TLM_ADAM_HPP_
