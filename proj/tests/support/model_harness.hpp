// Copyright 2026 The tlm Authors
// Licensed under the Apache License, Version 2.0
//
// Shared model-test machinery: the per-unit chain-rule oracle for the
// adaptive softmax (plain loops, recomputed from scratch for every unit)
// and the weight-copy harness that turns a full-softmax model into the
// degenerate single-cluster adaptive configuration.

#ifndef TLM_TESTS_MODEL_HARNESS_HPP_
#define TLM_TESTS_MODEL_HARNESS_HPP_

#include <cmath>
#include <vector>

#include "tlm/model.hpp"

namespace tlm::testing {

// log P(unit) for one hidden row and one unit id via the explicit chain
// rule: log softmax over the head for the unit's slot, plus (for tail
// units) the log softmax over its cluster after the down-projection.
// Everything is recomputed per call with straightforward loops.
inline double adaptive_unit_log_prob_oracle(const ModelParameters<double>& p,
                                            const double* h_row, int64_t unit) {
  const AdaptiveSoftmaxConfig a = effective_adaptive(p.config);
  const int64_t d = p.config.d_hidden;
  const Tensor<double>& hw = p.at(p.head_w);
  const Tensor<double>& hb = p.at(p.head_b);
  const int64_t head_cols = hw.dim(1);

  auto log_softmax_at = [](const std::vector<double>& z, int64_t idx) {
    double mx = z[0];
    for (double v : z) mx = v > mx ? v : mx;
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - mx);
    return z[static_cast<size_t>(idx)] - (mx + std::log(sum));
  };

  std::vector<double> head_logits(static_cast<size_t>(head_cols));
  for (int64_t j = 0; j < head_cols; ++j) {
    double acc = 0.0;
    for (int64_t k = 0; k < d; ++k) acc += h_row[k] * hw.at(k, j);
    head_logits[static_cast<size_t>(j)] = acc + hb.values[static_cast<size_t>(j)];
  }

  if (unit < a.head_units()) return log_softmax_at(head_logits, unit);

  int64_t cluster = 0;
  while (unit >= a.cutoffs[static_cast<size_t>(cluster + 1)]) ++cluster;
  const auto& tail = p.tails[static_cast<size_t>(cluster)];
  const Tensor<double>& pw = p.at(tail.proj);
  const Tensor<double>& tw = p.at(tail.w);
  const Tensor<double>& tb = p.at(tail.b);
  const int64_t width = pw.dim(1);
  std::vector<double> proj(static_cast<size_t>(width));
  for (int64_t j = 0; j < width; ++j) {
    double acc = 0.0;
    for (int64_t k = 0; k < d; ++k) acc += h_row[k] * pw.at(k, j);
    proj[static_cast<size_t>(j)] = acc;
  }
  const int64_t size = a.tail_size(cluster);
  std::vector<double> logits(static_cast<size_t>(size));
  for (int64_t j = 0; j < size; ++j) {
    double acc = 0.0;
    for (int64_t k = 0; k < width; ++k) acc += proj[static_cast<size_t>(k)] * tw.at(k, j);
    logits[static_cast<size_t>(j)] = acc + tb.values[static_cast<size_t>(j)];
  }
  return log_softmax_at(head_logits, a.head_units() + cluster) +
         log_softmax_at(logits, unit - a.tail_begin(cluster));
}

// Same architecture and weights as `full`, but with the output layer
// declared as a single-cluster adaptive softmax (cutoffs = [V], no tails).
template <typename T>
ModelParameters<T> degenerate_adaptive_copy(const ModelParameters<T>& full) {
  ModelConfig cfg = full.config;
  if (cfg.softmax_mode != SoftmaxMode::kFull || cfg.tie_embedding) {
    throw std::invalid_argument("degenerate_adaptive_copy: needs an untied full-softmax model");
  }
  cfg.softmax_mode = SoftmaxMode::kAdaptive;
  cfg.adaptive = AdaptiveSoftmaxConfig{{cfg.vocab_size}, 4};
  ModelParameters<T> out = detail::allocate_params<T>(cfg);
  for (size_t i = 0; i < out.names.size(); ++i) {
    std::string src = out.names[i];
    if (src == "asm.head.w") src = "out.w";
    if (src == "asm.head.b") src = "out.b";
    for (size_t j = 0; j < full.names.size(); ++j) {
      if (full.names[j] == src) {
        out.tensors[i].values = full.tensors[j].values;
        break;
      }
    }
  }
  return out;
}

}  // namespace tlm::testing

#endif  // TLM_TESTS_MODEL_HARNESS_HPP_
