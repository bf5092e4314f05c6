// Copyright 2026 The tlm Authors
// Licensed under the Apache License, Version 2.0
//
// Randomized gradient-check cases covering every differentiable op. Each
// case owns its input tensors and rebuilds its computation from their
// current values, so the finite-difference oracle can perturb them freely.

#ifndef TLM_TESTS_GRAD_CASES_HPP_
#define TLM_TESTS_GRAD_CASES_HPP_

#include <functional>
#include <string>
#include <vector>

#include "finite_diff.hpp"
#include "tlm/graph.hpp"
#include "tlm/rng.hpp"

namespace tlm::testing {

struct OpGradCase {
  std::string name;
  std::vector<Tensor<double>> inputs;
  std::function<ValueId(Graph<double>&, const std::vector<ValueId>&)> build;
};

inline Tensor<double> random_tensor(Rng& rng, std::vector<int64_t> shape,
                                    double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.values) v = rng.normal() * scale;
  return t;
}

// Runs one case: loss = sum(out * fixed_coeffs); returns the max relative
// error between one backward pass and central finite differences.
inline double run_grad_case(OpGradCase& c, Rng& rng) {
  // Probe the output shape, then fix projection coefficients.
  Tensor<double> coeffs;
  {
    Graph<double> g;
    std::vector<ValueId> ins;
    for (auto& t : c.inputs) ins.push_back(g.param(&t));
    const ValueId out = c.build(g, ins);
    coeffs = random_tensor(rng, g.value(out).shape);
  }
  auto eval = [&]() {
    Graph<double> g;
    std::vector<ValueId> ins;
    for (auto& t : c.inputs) ins.push_back(g.param(&t));
    const ValueId loss = g.sum(g.mul(c.build(g, ins), g.input(coeffs)));
    return g.value(loss).values[0];
  };

  std::vector<std::vector<double>> analytic;
  {
    for (auto& t : c.inputs) {
      t.ensure_grad();
      t.zero_grad();
    }
    Graph<double> g;
    std::vector<ValueId> ins;
    for (auto& t : c.inputs) ins.push_back(g.param(&t));
    const ValueId loss = g.sum(g.mul(c.build(g, ins), g.input(coeffs)));
    g.backward(loss);
    for (auto& t : c.inputs) analytic.push_back(t.grad);
  }

  std::vector<Tensor<double>*> ptrs;
  for (auto& t : c.inputs) ptrs.push_back(&t);
  return max_grad_error(eval, ptrs, analytic);
}

// One randomized case per differentiable op kind (broadcast variants
// included). Shapes are small; values are O(1) normals.
inline std::vector<OpGradCase> make_op_grad_cases(uint64_t seed) {
  Rng rng(seed);
  auto dim = [&rng]() { return 2 + static_cast<int64_t>(rng.uniform_int(4)); };
  std::vector<OpGradCase> cases;

  const int64_t m = dim(), k = dim(), n = dim();
  cases.push_back({"matmul_nn",
                   {random_tensor(rng, {m, k}), random_tensor(rng, {k, n})},
                   [](Graph<double>& g, const std::vector<ValueId>& in) {
                     return g.matmul(in[0], in[1]);
                   }});
  cases.push_back({"matmul_nt",
                   {random_tensor(rng, {m, k}), random_tensor(rng, {n, k})},
                   [](Graph<double>& g, const std::vector<ValueId>& in) {
                     return g.matmul(in[0], in[1], false, true);
                   }});
  cases.push_back({"matmul_tn",
                   {random_tensor(rng, {k, m}), random_tensor(rng, {k, n})},
                   [](Graph<double>& g, const std::vector<ValueId>& in) {
                     return g.matmul(in[0], in[1], true, false);
                   }});

  const int64_t r = dim(), cdim = dim();
  cases.push_back({"add",
                   {random_tensor(rng, {r, cdim}), random_tensor(rng, {r, cdim})},
                   [](Graph<double>& g, const std::vector<ValueId>& in) {
                     return g.add(in[0], in[1]);
                   }});
  cases.push_back({"add_bias",
                   {random_tensor(rng, {r, cdim}), random_tensor(rng, {cdim})},
                   [](Graph<double>& g, const std::vector<ValueId>& in) {
                     return g.add(in[0], in[1]);
                   }});
  cases.push_back({"add_row_scalar",
                   {random_tensor(rng, {r, cdim}), random_tensor(rng, {r, 1})},
                   [](Graph<double>& g, const std::vector<ValueId>& in) {
                     return g.add(in[0], in[1]);
                   }});
  cases.push_back({"mul",
                   {random_tensor(rng, {r, cdim}), random_tensor(rng, {r, cdim})},
                   [](Graph<double>& g, const std::vector<ValueId>& in) {
                     return g.mul(in[0], in[1]);
                   }});
  cases.push_back({"mul_bias",
                   {random_tensor(rng, {r, cdim}), random_tensor(rng, {cdim})},
                   [](Graph<double>& g, const std::vector<ValueId>& in) {
                     return g.mul(in[0], in[1]);
                   }});
  cases.push_back({"mul_row_scalar",
                   {random_tensor(rng, {r, cdim}), random_tensor(rng, {r, 1})},
                   [](Graph<double>& g, const std::vector<ValueId>& in) {
                     return g.mul(in[0], in[1]);
                   }});
  cases.push_back({"scale",
                   {random_tensor(rng, {r, cdim})},
                   [](Graph<double>& g, const std::vector<ValueId>& in) {
                     return g.scale(in[0], -1.7);
                   }});
  cases.push_back({"softmax",
                   {random_tensor(rng, {r, cdim}, 2.0)},
                   [](Graph<double>& g, const std::vector<ValueId>& in) {
                     return g.softmax(in[0]);
                   }});
  cases.push_back({"log_softmax",
                   {random_tensor(rng, {r, cdim}, 2.0)},
                   [](Graph<double>& g, const std::vector<ValueId>& in) {
                     return g.log_softmax(in[0]);
                   }});
  const int64_t sq = 2 + static_cast<int64_t>(rng.uniform_int(4));
  cases.push_back({"causal_softmax",
                   {random_tensor(rng, {sq, sq}, 2.0)},
                   [](Graph<double>& g, const std::vector<ValueId>& in) {
                     return g.causal_softmax(in[0]);
                   }});
  const int64_t attn_len = 2 + static_cast<int64_t>(rng.uniform_int(4));
  const int64_t attn_heads = 1 + static_cast<int64_t>(rng.uniform_int(2));
  const int64_t attn_d = attn_heads * (2 + static_cast<int64_t>(rng.uniform_int(3)));
  cases.push_back({"causal_attention",
                   {random_tensor(rng, {attn_len, attn_d}),
                    random_tensor(rng, {attn_len, attn_d}),
                    random_tensor(rng, {attn_len, attn_d})},
                   [attn_heads](Graph<double>& g, const std::vector<ValueId>& in) {
                     return g.causal_attention(in[0], in[1], in[2], attn_heads);
                   }});
  cases.push_back({"layer_norm",
                   {random_tensor(rng, {r, 4 + cdim})},
                   [](Graph<double>& g, const std::vector<ValueId>& in) {
                     return g.layer_norm(in[0]);
                   }});
  cases.push_back({"gelu",
                   {random_tensor(rng, {r, cdim}, 1.5)},
                   [](Graph<double>& g, const std::vector<ValueId>& in) {
                     return g.gelu(in[0]);
                   }});

  const int64_t vocab = 3 + static_cast<int64_t>(rng.uniform_int(4));
  std::vector<int64_t> ids;
  for (int i = 0; i < 5; ++i) ids.push_back(static_cast<int64_t>(rng.uniform_int(vocab)));
  cases.push_back({"embedding_lookup",
                   {random_tensor(rng, {vocab, cdim})},
                   [ids](Graph<double>& g, const std::vector<ValueId>& in) {
                     return g.embedding_lookup(in[0], ids);
                   }});
  cases.push_back({"concat_cols",
                   {random_tensor(rng, {r, cdim}), random_tensor(rng, {r, dim()})},
                   [](Graph<double>& g, const std::vector<ValueId>& in) {
                     return g.concat({in[0], in[1]}, 1);
                   }});
  cases.push_back({"concat_rows",
                   {random_tensor(rng, {r, cdim}), random_tensor(rng, {dim(), cdim})},
                   [](Graph<double>& g, const std::vector<ValueId>& in) {
                     return g.concat({in[0], in[1]}, 0);
                   }});
  cases.push_back({"slice_cols",
                   {random_tensor(rng, {r, 4 + cdim})},
                   [cdim](Graph<double>& g, const std::vector<ValueId>& in) {
                     return g.slice(in[0], 1, 2, cdim);
                   }});
  cases.push_back({"slice_rows",
                   {random_tensor(rng, {4 + r, cdim})},
                   [r](Graph<double>& g, const std::vector<ValueId>& in) {
                     return g.slice(in[0], 0, 1, r);
                   }});

  std::vector<int64_t> targets;
  for (int64_t i = 0; i < r; ++i) targets.push_back(static_cast<int64_t>(rng.uniform_int(cdim)));
  cases.push_back({"cross_entropy",
                   {random_tensor(rng, {r, cdim}, 2.0)},
                   [targets](Graph<double>& g, const std::vector<ValueId>& in) {
                     return g.cross_entropy(g.log_softmax(in[0]), targets);
                   }});
  cases.push_back({"kl_divergence",
                   {random_tensor(rng, {r, cdim}, 2.0), random_tensor(rng, {r, cdim}, 2.0)},
                   [](Graph<double>& g, const std::vector<ValueId>& in) {
                     return g.kl_divergence(g.log_softmax(in[0]), g.log_softmax(in[1]));
                   }});
  cases.push_back({"sum",
                   {random_tensor(rng, {r, cdim})},
                   [](Graph<double>& g, const std::vector<ValueId>& in) {
                     return g.sum(in[0]);
                   }});
  return cases;
}

}  // namespace tlm::testing

#endif  // TLM_TESTS_GRAD_CASES_HPP_
