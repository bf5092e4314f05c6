// Copyright 2026 The tlm Authors
// Licensed under the Apache License, Version 2.0
//
// Decoder-only Transformer language model (pre-norm blocks, learned
// absolute positions, GELU feed-forward) with either a full softmax or an
// adaptive softmax output layer.

#ifndef TLM_MODEL_HPP_
#define TLM_MODEL_HPP_

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tlm/bpe.hpp"
#include "tlm/graph.hpp"
#include "tlm/rng.hpp"
#include "tlm/tensor.hpp"

namespace tlm {

enum class SoftmaxMode { kFull, kAdaptive };

// Frequency-ordered cluster layout: head covers ids [0, cutoffs[0]), tail
// cluster i covers [cutoffs[i-1], cutoffs[i]); the last cutoff equals the
// vocabulary size. Tail i projects hidden states down to
// max(1, d_hidden / projection_factor^i) dimensions before its output
// matrix (i counted from 1).
struct AdaptiveSoftmaxConfig {
  std::vector<int64_t> cutoffs;
  int64_t projection_factor = 4;

  int64_t num_tails() const { return static_cast<int64_t>(cutoffs.size()) - 1; }
  int64_t head_units() const { return cutoffs.empty() ? 0 : cutoffs[0]; }
  int64_t tail_begin(int64_t i) const { return cutoffs[static_cast<size_t>(i)]; }
  int64_t tail_size(int64_t i) const {
    return cutoffs[static_cast<size_t>(i + 1)] - cutoffs[static_cast<size_t>(i)];
  }

  int64_t tail_width(int64_t i, int64_t d_hidden) const {
    int64_t w = d_hidden;
    for (int64_t k = 0; k <= i; ++k) w /= projection_factor;
    return w < 1 ? 1 : w;
  }

  // Heuristic defaults when a model asks for adaptive softmax without
  // explicit cutoffs: boundaries near V/5 and V/2.
  static AdaptiveSoftmaxConfig defaults_for(int64_t vocab_size) {
    AdaptiveSoftmaxConfig c;
    const int64_t c1 = (vocab_size + 4) / 5;
    const int64_t c2 = (vocab_size + 1) / 2;
    for (int64_t cut : {c1, c2, vocab_size}) {
      if (cut > 0 && (c.cutoffs.empty() || cut > c.cutoffs.back())) {
        c.cutoffs.push_back(cut);
      }
    }
    if (c.cutoffs.empty() || c.cutoffs.back() != vocab_size) {
      c.cutoffs.push_back(vocab_size);
    }
    return c;
  }
};

struct ModelConfig {
  int64_t n_layers = 0;
  int64_t n_heads = 0;
  int64_t d_embed = 0;
  int64_t d_hidden = 0;
  int64_t d_ffn = 0;
  int64_t vocab_size = 0;
  int64_t max_context = 512;
  double dropout = 0.1;
  SoftmaxMode softmax_mode = SoftmaxMode::kFull;
  std::optional<AdaptiveSoftmaxConfig> adaptive;
  bool tie_embedding = false;

  int64_t head_dim() const { return d_hidden / n_heads; }
};

// Named architecture presets ("large", "small-one", "small-two"); vocabulary
// size, softmax mode, context and dropout are filled in by the caller.
ModelConfig preset_config(const std::string& name);

void validate_config(const ModelConfig& config);

// Effective adaptive layout (explicit config or defaults).
AdaptiveSoftmaxConfig effective_adaptive(const ModelConfig& config);

struct ParamCount {
  std::vector<std::pair<std::string, int64_t>> components;
  int64_t total = 0;
};

// Closed-form parameter accounting; equals the stored value count of a
// model built from the same config, exactly.
ParamCount count_params(const ModelConfig& config);

template <typename T>
struct ModelParameters {
  ModelConfig config;
  std::vector<std::string> names;
  std::vector<Tensor<T>> tensors;

  struct LayerIdx {
    int ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
  };
  struct TailIdx {
    int proj, w, b;
  };

  int tok_emb = -1, pos_emb = -1, in_proj_w = -1, in_proj_b = -1;
  std::vector<LayerIdx> layers;
  int final_ln_g = -1, final_ln_b = -1;
  int out_w = -1, out_b = -1;    // full softmax ([d_hidden, V] layout)
  int head_w = -1, head_b = -1;  // adaptive head ([d_hidden, c1 + tails])
  std::vector<TailIdx> tails;

  int64_t total_values() const {
    int64_t n = 0;
    for (const auto& t : tensors) n += t.numel();
    return n;
  }
  Tensor<T>& at(int idx) { return tensors[static_cast<size_t>(idx)]; }
  const Tensor<T>& at(int idx) const { return tensors[static_cast<size_t>(idx)]; }
  void zero_grads() {
    for (auto& t : tensors) {
      t.ensure_grad();
      t.zero_grad();
    }
  }
};

namespace detail {

template <typename T>
int add_tensor(ModelParameters<T>& p, std::string name, std::vector<int64_t> shape) {
  p.names.push_back(std::move(name));
  p.tensors.emplace_back(std::move(shape));
  return static_cast<int>(p.tensors.size() - 1);
}

// Allocates every tensor (zero-filled) in the canonical manifest order.
template <typename T>
ModelParameters<T> allocate_params(const ModelConfig& config) {
  validate_config(config);
  ModelParameters<T> p;
  p.config = config;
  p.tok_emb = add_tensor(p, "tok_emb", {config.vocab_size, config.d_embed});
  p.pos_emb = add_tensor(p, "pos_emb", {config.max_context, config.d_embed});
  if (config.d_embed != config.d_hidden) {
    p.in_proj_w = add_tensor(p, "in_proj.w", {config.d_embed, config.d_hidden});
    p.in_proj_b = add_tensor(p, "in_proj.b", {config.d_hidden});
  }
  const int64_t d = config.d_hidden;
  for (int64_t l = 0; l < config.n_layers; ++l) {
    const std::string prefix = "blocks." + std::to_string(l) + ".";
    typename ModelParameters<T>::LayerIdx idx;
    idx.ln1_g = add_tensor(p, prefix + "ln1.g", {d});
    idx.ln1_b = add_tensor(p, prefix + "ln1.b", {d});
    idx.wq = add_tensor(p, prefix + "attn.wq", {d, d});
    idx.bq = add_tensor(p, prefix + "attn.bq", {d});
    idx.wk = add_tensor(p, prefix + "attn.wk", {d, d});
    idx.bk = add_tensor(p, prefix + "attn.bk", {d});
    idx.wv = add_tensor(p, prefix + "attn.wv", {d, d});
    idx.bv = add_tensor(p, prefix + "attn.bv", {d});
    idx.wo = add_tensor(p, prefix + "attn.wo", {d, d});
    idx.bo = add_tensor(p, prefix + "attn.bo", {d});
    idx.ln2_g = add_tensor(p, prefix + "ln2.g", {d});
    idx.ln2_b = add_tensor(p, prefix + "ln2.b", {d});
    idx.w1 = add_tensor(p, prefix + "ffn.w1", {d, config.d_ffn});
    idx.b1 = add_tensor(p, prefix + "ffn.b1", {config.d_ffn});
    idx.w2 = add_tensor(p, prefix + "ffn.w2", {config.d_ffn, d});
    idx.b2 = add_tensor(p, prefix + "ffn.b2", {d});
    p.layers.push_back(idx);
  }
  p.final_ln_g = add_tensor(p, "final_ln.g", {d});
  p.final_ln_b = add_tensor(p, "final_ln.b", {d});
  if (config.softmax_mode == SoftmaxMode::kFull) {
    if (!config.tie_embedding) {
      p.out_w = add_tensor(p, "out.w", {d, config.vocab_size});
    }
    p.out_b = add_tensor(p, "out.b", {config.vocab_size});
  } else {
    const AdaptiveSoftmaxConfig asm_cfg = effective_adaptive(config);
    const int64_t head_cols = asm_cfg.head_units() + asm_cfg.num_tails();
    p.head_w = add_tensor(p, "asm.head.w", {d, head_cols});
    p.head_b = add_tensor(p, "asm.head.b", {head_cols});
    for (int64_t i = 0; i < asm_cfg.num_tails(); ++i) {
      const std::string prefix = "asm.tail." + std::to_string(i) + ".";
      typename ModelParameters<T>::TailIdx t;
      const int64_t w = asm_cfg.tail_width(i, d);
      t.proj = add_tensor(p, prefix + "proj", {d, w});
      t.w = add_tensor(p, prefix + "w", {w, asm_cfg.tail_size(i)});
      t.b = add_tensor(p, prefix + "b", {asm_cfg.tail_size(i)});
      p.tails.push_back(t);
    }
  }
  return p;
}

}  // namespace detail

// Weight init: normal(0, 0.02) for matrices and embeddings, zeros for
// biases, ones/zeros for layer-norm scale/offset; deterministic under seed.
template <typename T>
ModelParameters<T> build_model(const ModelConfig& config, uint64_t seed) {
  ModelParameters<T> p = detail::allocate_params<T>(config);
  Rng rng(seed);
  for (size_t i = 0; i < p.tensors.size(); ++i) {
    const std::string& name = p.names[i];
    Tensor<T>& t = p.tensors[i];
    const bool ln_scale = name.size() >= 2 && name.compare(name.size() - 2, 2, ".g") == 0 &&
                          name.find("ln") != std::string::npos;
    const bool bias = t.ndim() == 1;
    if (ln_scale) {
      std::fill(t.values.begin(), t.values.end(), T(1));
    } else if (bias) {
      std::fill(t.values.begin(), t.values.end(), T(0));
    } else {
      for (auto& v : t.values) v = T(rng.normal() * 0.02);
    }
  }
  return p;
}

struct ForwardOptions {
  double dropout = 0.0;  // 0 disables dropout entirely (inference mode)
};

namespace detail {

inline void check_ids(std::span<const int64_t> ids, const ModelConfig& config) {
  if (ids.empty()) throw std::invalid_argument("forward: empty token sequence");
  if (static_cast<int64_t>(ids.size()) > config.max_context) {
    throw std::invalid_argument("forward: sequence of " + std::to_string(ids.size()) +
                                " tokens exceeds max_context " +
                                std::to_string(config.max_context));
  }
  for (int64_t id : ids) {
    if (id < 0 || id >= config.vocab_size) {
      throw std::out_of_range("forward: token id " + std::to_string(id) +
                              " outside vocabulary of " +
                              std::to_string(config.vocab_size));
    }
  }
}

template <typename T>
ValueId affine_layer_norm(Graph<T>& g, ValueId x, ModelParameters<T>& p, int gi, int bi) {
  ValueId normed = g.layer_norm(x);
  ValueId scaled = g.mul(normed, g.param(&p.at(gi)));
  return g.add(scaled, g.param(&p.at(bi)));
}

template <typename T>
ValueId maybe_dropout(Graph<T>& g, ValueId x, const ForwardOptions& opt) {
  if (opt.dropout <= 0.0) return x;
  return g.mul(x, g.dropout_mask(g.value(x).shape, opt.dropout));
}

}  // namespace detail

using TokenSpans = std::vector<std::span<const int64_t>>;

// Transformer stack: embeddings -> pre-norm blocks -> final layer norm.
// Several independent sequences may be packed into one call; attention
// stays within each sequence, so every output row is identical to what the
// unpacked forward would produce. Returns the [total_len, d_hidden] hidden
// states.
template <typename T>
ValueId build_hidden(Graph<T>& g, ModelParameters<T>& p, const TokenSpans& seqs,
                     const ForwardOptions& opt = {}) {
  if (seqs.empty()) throw std::invalid_argument("forward: no sequences");
  std::vector<int64_t> ids, positions, blocks;
  for (const auto& seq : seqs) {
    detail::check_ids(seq, p.config);
    blocks.push_back(static_cast<int64_t>(seq.size()));
    for (size_t i = 0; i < seq.size(); ++i) {
      ids.push_back(seq[i]);
      positions.push_back(static_cast<int64_t>(i));
    }
  }

  ValueId tok = g.embedding_lookup(g.param(&p.at(p.tok_emb)), std::move(ids));
  ValueId pos = g.embedding_lookup(g.param(&p.at(p.pos_emb)), std::move(positions));
  ValueId x = g.add(tok, pos);
  if (p.in_proj_w >= 0) {
    x = g.add(g.matmul(x, g.param(&p.at(p.in_proj_w))), g.param(&p.at(p.in_proj_b)));
  }
  x = detail::maybe_dropout(g, x, opt);

  for (const auto& l : p.layers) {
    ValueId h = detail::affine_layer_norm(g, x, p, l.ln1_g, l.ln1_b);
    ValueId q = g.add(g.matmul(h, g.param(&p.at(l.wq))), g.param(&p.at(l.bq)));
    ValueId k = g.add(g.matmul(h, g.param(&p.at(l.wk))), g.param(&p.at(l.bk)));
    ValueId v = g.add(g.matmul(h, g.param(&p.at(l.wv))), g.param(&p.at(l.bv)));
    ValueId ctx = g.causal_attention(q, k, v, p.config.n_heads, blocks);
    ctx = detail::maybe_dropout(g, ctx, opt);
    ValueId attn = g.add(g.matmul(ctx, g.param(&p.at(l.wo))), g.param(&p.at(l.bo)));
    x = g.add(x, detail::maybe_dropout(g, attn, opt));

    ValueId h2 = detail::affine_layer_norm(g, x, p, l.ln2_g, l.ln2_b);
    ValueId f = g.gelu(g.add(g.matmul(h2, g.param(&p.at(l.w1))), g.param(&p.at(l.b1))));
    ValueId f2 = g.add(g.matmul(f, g.param(&p.at(l.w2))), g.param(&p.at(l.b2)));
    x = g.add(x, detail::maybe_dropout(g, f2, opt));
  }
  return detail::affine_layer_norm(g, x, p, p.final_ln_g, p.final_ln_b);
}

template <typename T>
ValueId build_hidden(Graph<T>& g, ModelParameters<T>& p, std::span<const int64_t> ids,
                     const ForwardOptions& opt = {}) {
  return build_hidden(g, p, TokenSpans{ids}, opt);
}

// Full-vocabulary log-probabilities from hidden states through the adaptive
// softmax: head units keep their head log-probability; tail units add their
// cluster-slot log-probability to the within-cluster one. Each row sums to
// one by construction.
template <typename T>
ValueId adaptive_log_probs(Graph<T>& g, ValueId hidden, ModelParameters<T>& p) {
  const AdaptiveSoftmaxConfig asm_cfg = effective_adaptive(p.config);
  ValueId head_logits =
      g.add(g.matmul(hidden, g.param(&p.at(p.head_w))), g.param(&p.at(p.head_b)));
  ValueId head_ls = g.log_softmax(head_logits);
  if (asm_cfg.num_tails() == 0) return head_ls;

  std::vector<ValueId> parts;
  parts.push_back(g.slice(head_ls, 1, 0, asm_cfg.head_units()));
  for (int64_t i = 0; i < asm_cfg.num_tails(); ++i) {
    const auto& tail = p.tails[static_cast<size_t>(i)];
    ValueId proj = g.matmul(hidden, g.param(&p.at(tail.proj)));
    ValueId logits = g.add(g.matmul(proj, g.param(&p.at(tail.w))), g.param(&p.at(tail.b)));
    ValueId ls = g.log_softmax(logits);
    ValueId slot = g.slice(head_ls, 1, asm_cfg.head_units() + i, 1);
    parts.push_back(g.add(ls, slot));
  }
  return g.concat(parts, 1);
}

// Per-position log-probabilities over the whole vocabulary ([len, V]).
// Materializes the full distribution in both softmax modes.
template <typename T>
ValueId build_log_probs(Graph<T>& g, ModelParameters<T>& p, const TokenSpans& seqs,
                        const ForwardOptions& opt = {}) {
  ValueId hidden = build_hidden(g, p, seqs, opt);
  if (p.config.softmax_mode == SoftmaxMode::kAdaptive) {
    return adaptive_log_probs(g, hidden, p);
  }
  ValueId logits = p.config.tie_embedding
                       ? g.matmul(hidden, g.param(&p.at(p.tok_emb)), false, true)
                       : g.matmul(hidden, g.param(&p.at(p.out_w)));
  logits = g.add(logits, g.param(&p.at(p.out_b)));
  return g.log_softmax(logits);
}

template <typename T>
ValueId build_log_probs(Graph<T>& g, ModelParameters<T>& p, std::span<const int64_t> ids,
                        const ForwardOptions& opt = {}) {
  return build_log_probs(g, p, TokenSpans{ids}, opt);
}

// Training loss path: sum of -log P(target) over all positions of all
// packed sequences. With the adaptive softmax only the clusters that
// actually contain targets are evaluated; the materialized path above is
// reserved for KD and rescoring.
template <typename T>
ValueId build_nll_sum(Graph<T>& g, ModelParameters<T>& p, const TokenSpans& seqs,
                      std::span<const int64_t> targets, const ForwardOptions& opt = {}) {
  size_t total = 0;
  for (const auto& s : seqs) total += s.size();
  if (total != targets.size()) {
    throw std::invalid_argument("build_nll_sum: " + std::to_string(total) +
                                " inputs vs " + std::to_string(targets.size()) +
                                " targets");
  }
  if (p.config.softmax_mode == SoftmaxMode::kFull) {
    ValueId lp = build_log_probs(g, p, seqs, opt);
    return g.cross_entropy(lp, {targets.begin(), targets.end()});
  }
  const AdaptiveSoftmaxConfig asm_cfg = effective_adaptive(p.config);
  ValueId hidden = build_hidden(g, p, seqs, opt);
  ValueId head_logits =
      g.add(g.matmul(hidden, g.param(&p.at(p.head_w))), g.param(&p.at(p.head_b)));
  ValueId head_ls = g.log_softmax(head_logits);

  // Head slot per position: the unit itself, or its tail cluster's slot.
  std::vector<int64_t> head_targets(targets.size());
  std::vector<std::vector<int64_t>> cluster_rows(static_cast<size_t>(asm_cfg.num_tails()));
  std::vector<std::vector<int64_t>> cluster_targets(static_cast<size_t>(asm_cfg.num_tails()));
  for (size_t r = 0; r < targets.size(); ++r) {
    const int64_t t = targets[r];
    if (t < asm_cfg.head_units()) {
      head_targets[r] = t;
      continue;
    }
    int64_t c = 0;
    while (t >= asm_cfg.cutoffs[static_cast<size_t>(c + 1)]) ++c;
    head_targets[r] = asm_cfg.head_units() + c;
    cluster_rows[static_cast<size_t>(c)].push_back(static_cast<int64_t>(r));
    cluster_targets[static_cast<size_t>(c)].push_back(t - asm_cfg.tail_begin(c));
  }
  ValueId loss = g.cross_entropy(head_ls, head_targets);
  for (int64_t c = 0; c < asm_cfg.num_tails(); ++c) {
    if (cluster_rows[static_cast<size_t>(c)].empty()) continue;
    const auto& tail = p.tails[static_cast<size_t>(c)];
    ValueId rows = g.embedding_lookup(hidden, cluster_rows[static_cast<size_t>(c)]);
    ValueId proj = g.matmul(rows, g.param(&p.at(tail.proj)));
    ValueId logits = g.add(g.matmul(proj, g.param(&p.at(tail.w))), g.param(&p.at(tail.b)));
    loss = g.add(loss, g.cross_entropy(g.log_softmax(logits), cluster_targets[static_cast<size_t>(c)]));
  }
  return loss;
}

template <typename T>
ValueId build_nll_sum(Graph<T>& g, ModelParameters<T>& p, std::span<const int64_t> ids,
                      std::span<const int64_t> targets, const ForwardOptions& opt = {}) {
  return build_nll_sum(g, p, TokenSpans{ids}, targets, opt);
}

// Inference-mode forward: per-position log-probabilities as a plain tensor.
template <typename T>
Tensor<T> forward_log_probs(ModelParameters<T>& p, const TokenSpans& seqs) {
  Graph<T> g;
  ValueId lp = build_log_probs(g, p, seqs, ForwardOptions{});
  return g.value(lp);
}

template <typename T>
Tensor<T> forward_log_probs(ModelParameters<T>& p, std::span<const int64_t> ids) {
  return forward_log_probs(p, TokenSpans{ids});
}

template <typename T>
Tensor<T> forward_log_probs(ModelParameters<T>& p, std::initializer_list<int64_t> ids) {
  return forward_log_probs(p, std::span<const int64_t>(ids.begin(), ids.size()));
}

struct SequenceScore {
  double total = 0.0;                 // natural-log probability of the sequence
  std::vector<double> per_token;      // one conditional per predicted token
};

// Log-probability of a BOS-initial sequence: sum over positions of
// log P(token | prefix). The begin-of-sequence token itself is given.
template <typename T>
SequenceScore sequence_log_prob(ModelParameters<T>& p, std::span<const int64_t> ids) {
  if (ids.empty() || ids[0] != Vocabulary::kBosId) {
    throw std::invalid_argument("sequence_log_prob: sequence must begin with BOS");
  }
  SequenceScore score;
  if (ids.size() < 2) return score;
  Tensor<T> lp = forward_log_probs(p, ids.subspan(0, ids.size() - 1));
  for (size_t j = 1; j < ids.size(); ++j) {
    const double v = static_cast<double>(lp.at(static_cast<int64_t>(j - 1), ids[j]));
    score.per_token.push_back(v);
    score.total += v;
  }
  return score;
}

template <typename T>
SequenceScore sequence_log_prob(ModelParameters<T>& p, std::initializer_list<int64_t> ids) {
  return sequence_log_prob(p, std::span<const int64_t>(ids.begin(), ids.size()));
}

}  // namespace tlm

#endif  // TLM_MODEL_HPP_
