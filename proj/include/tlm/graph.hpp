// Copyright 2026 The tlm Authors
// Licensed under the Apache License, Version 2.0
//
// Tape-based reverse-mode autodiff over dense tensors. Nodes are recorded
// in creation order, which is already a topological order; backward walks
// the tape once in reverse. One graph instance is single-threaded, but
// independent graphs can run concurrently.

#ifndef TLM_GRAPH_HPP_
#define TLM_GRAPH_HPP_

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tlm/kernels.hpp"
#include "tlm/rng.hpp"
#include "tlm/tensor.hpp"

namespace tlm {

using ValueId = int32_t;

enum class OpKind {
  kInput,
  kParam,
  kMatmul,
  kAdd,
  kMul,
  kScale,
  kSoftmax,
  kLogSoftmax,
  kCausalSoftmax,
  kCausalAttention,
  kLayerNorm,
  kGelu,
  kEmbeddingLookup,
  kConcat,
  kSlice,
  kDropoutMask,
  kCrossEntropy,
  kKlDivergence,
  kSum,
};

inline const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::kInput: return "input";
    case OpKind::kParam: return "param";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kAdd: return "add";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kLogSoftmax: return "log_softmax";
    case OpKind::kCausalSoftmax: return "causal_softmax";
    case OpKind::kCausalAttention: return "causal_attention";
    case OpKind::kLayerNorm: return "layer_norm";
    case OpKind::kGelu: return "gelu";
    case OpKind::kEmbeddingLookup: return "embedding_lookup";
    case OpKind::kConcat: return "concat";
    case OpKind::kSlice: return "slice";
    case OpKind::kDropoutMask: return "dropout_mask";
    case OpKind::kCrossEntropy: return "cross_entropy";
    case OpKind::kKlDivergence: return "kl_divergence";
    case OpKind::kSum: return "sum";
  }
  return "?";
}

// Attributes for the generic apply() entry point; each typed builder uses
// the subset it needs.
struct OpAttrs {
  bool trans_a = false;
  bool trans_b = false;
  double factor = 1.0;               // scale
  int axis = 0;                      // concat / slice
  int64_t start = 0, len = 0;        // slice
  double p = 0.0;                    // dropout_mask
  int64_t heads = 1;                 // causal_attention
  std::vector<int64_t> shape;        // dropout_mask
  std::vector<int64_t> indices;      // embedding_lookup ids / cross_entropy targets
};

template <typename T>
class Graph {
 public:
  explicit Graph(Rng* rng = nullptr) : rng_(rng) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // ---- leaves ----

  ValueId input(Tensor<T> t) {
    Node n(OpKind::kInput);
    n.out = std::move(t);
    return push(std::move(n));
  }

  // Tracked leaf referencing externally owned storage; backward accumulates
  // into external->grad.
  ValueId param(Tensor<T>* external) {
    if (external == nullptr) throw std::invalid_argument("param: null tensor");
    Node n(OpKind::kParam);
    n.external = external;
    return push(std::move(n));
  }

  // ---- operations ----

  ValueId matmul(ValueId a, ValueId b, bool trans_a = false,
                 bool trans_b = false) {
    const Tensor<T>& ta = value(a);
    const Tensor<T>& tb = value(b);
    if (trans_a && trans_b) {
      throw std::invalid_argument("matmul: both operands transposed is unsupported");
    }
    if (ta.ndim() != 2 || tb.ndim() != 2) {
      throw std::invalid_argument(std::string("matmul: operands must be 2-D, got ") +
                                  shape_to_string(ta.shape) + " x " +
                                  shape_to_string(tb.shape));
    }
    const int64_t m = trans_a ? ta.dim(1) : ta.dim(0);
    const int64_t ka = trans_a ? ta.dim(0) : ta.dim(1);
    const int64_t kb = trans_b ? tb.dim(1) : tb.dim(0);
    const int64_t nn = trans_b ? tb.dim(0) : tb.dim(1);
    if (ka != kb) {
      throw std::invalid_argument("matmul: inner dimensions differ: " +
                                  shape_to_string(ta.shape) + " x " +
                                  shape_to_string(tb.shape));
    }
    Node n(OpKind::kMatmul, {a, b});
    n.attrs.trans_a = trans_a;
    n.attrs.trans_b = trans_b;
    n.out = Tensor<T>({m, nn});
    if (!trans_a && !trans_b) {
      kernels::matmul_nn(n.out.values.data(), ta.values.data(), tb.values.data(), m, ka, nn);
    } else if (!trans_a && trans_b) {
      kernels::matmul_nt(n.out.values.data(), ta.values.data(), tb.values.data(), m, ka, nn);
    } else {
      kernels::matmul_tn(n.out.values.data(), ta.values.data(), tb.values.data(), m, ka, nn);
    }
    return push(std::move(n));
  }

  // Same-shape elementwise add, or broadcast when b is 1-D matching the
  // last dimension of a (per-column bias) or [rows,1] (per-row scalar).
  ValueId add(ValueId a, ValueId b) { return add_mul(OpKind::kAdd, a, b); }

  // Hadamard product with the same broadcast rules as add.
  ValueId mul(ValueId a, ValueId b) { return add_mul(OpKind::kMul, a, b); }

  ValueId scale(ValueId a, double factor) {
    const Tensor<T>& ta = value(a);
    Node n(OpKind::kScale, {a});
    n.attrs.factor = factor;
    n.out = Tensor<T>(ta.shape);
    kernels::scale(n.out.values.data(), ta.values.data(), T(factor), ta.numel());
    return push(std::move(n));
  }

  ValueId softmax(ValueId a) { return rowwise(OpKind::kSoftmax, a); }
  ValueId log_softmax(ValueId a) { return rowwise(OpKind::kLogSoftmax, a); }
  ValueId layer_norm(ValueId a) { return rowwise(OpKind::kLayerNorm, a); }

  ValueId causal_softmax(ValueId a) {
    const Tensor<T>& ta = value(a);
    if (ta.ndim() != 2 || ta.dim(0) != ta.dim(1)) {
      throw std::invalid_argument("causal_softmax: expects square scores, got " +
                                  shape_to_string(ta.shape));
    }
    Node n(OpKind::kCausalSoftmax, {a});
    n.out = Tensor<T>(ta.shape);
    kernels::causal_softmax(n.out.values.data(), ta.values.data(), ta.dim(0));
    return push(std::move(n));
  }

  ValueId gelu(ValueId a) {
    const Tensor<T>& ta = value(a);
    Node n(OpKind::kGelu, {a});
    n.out = Tensor<T>(ta.shape);
    kernels::gelu(n.out.values.data(), ta.values.data(), ta.numel());
    return push(std::move(n));
  }

  // Fused multi-head causal self-attention over [len, d] projections; head
  // h reads and writes column block [h*dh, (h+1)*dh). Rows may pack several
  // independent sequences: `blocks` lists their lengths (summing to len),
  // and attention never crosses a block boundary. The attention
  // probabilities are kept on the node for the backward pass.
  ValueId causal_attention(ValueId q, ValueId k, ValueId v, int64_t heads,
                           std::vector<int64_t> blocks = {}) {
    const Tensor<T>& tq = value(q);
    const Tensor<T>& tk = value(k);
    const Tensor<T>& tv = value(v);
    if (tq.ndim() != 2 || tq.shape != tk.shape || tq.shape != tv.shape) {
      throw std::invalid_argument("causal_attention: q/k/v shapes differ: " +
                                  shape_to_string(tq.shape) + " vs " +
                                  shape_to_string(tk.shape) + " vs " +
                                  shape_to_string(tv.shape));
    }
    if (heads < 1 || tq.dim(1) % heads != 0) {
      throw std::invalid_argument("causal_attention: width " + std::to_string(tq.dim(1)) +
                                  " not divisible into " + std::to_string(heads) + " heads");
    }
    const int64_t len = tq.dim(0);
    if (blocks.empty()) blocks.push_back(len);
    int64_t total = 0, max_block = 0;
    for (int64_t b : blocks) {
      if (b <= 0) throw std::invalid_argument("causal_attention: non-positive block length");
      total += b;
      max_block = std::max(max_block, b);
    }
    if (total != len) {
      throw std::invalid_argument("causal_attention: blocks sum to " + std::to_string(total) +
                                  ", rows are " + std::to_string(len));
    }
    Node n(OpKind::kCausalAttention, {q, k, v});
    n.attrs.heads = heads;
    n.attrs.indices.resize(static_cast<size_t>(len));  // block start per row
    int64_t row = 0;
    for (int64_t b : blocks) {
      for (int64_t i = 0; i < b; ++i) n.attrs.indices[static_cast<size_t>(row + i)] = row;
      row += b;
    }
    n.attrs.len = max_block;
    n.out = Tensor<T>(tq.shape);
    n.aux = Tensor<T>({heads * len, max_block});
    kernels::causal_attention(n.out.values.data(), n.aux.values.data(),
                              tq.values.data(), tk.values.data(), tv.values.data(),
                              len, tq.dim(1), heads, n.attrs.indices.data(), max_block);
    return push(std::move(n));
  }

  // Gathers rows of a 2-D table; works on parameters (embeddings) and on
  // intermediates (row selection).
  ValueId embedding_lookup(ValueId table, std::vector<int64_t> ids) {
    const Tensor<T>& tt = value(table);
    if (tt.ndim() != 2) {
      throw std::invalid_argument("embedding_lookup: table must be 2-D, got " +
                                  shape_to_string(tt.shape));
    }
    if (ids.empty()) throw std::invalid_argument("embedding_lookup: empty id list");
    for (int64_t id : ids) {
      if (id < 0 || id >= tt.dim(0)) {
        throw std::out_of_range("embedding_lookup: id " + std::to_string(id) +
                                " outside table " + shape_to_string(tt.shape));
      }
    }
    Node n(OpKind::kEmbeddingLookup, {table});
    n.attrs.indices = std::move(ids);
    n.out = Tensor<T>({static_cast<int64_t>(n.attrs.indices.size()), tt.dim(1)});
    kernels::gather_rows(n.out.values.data(), tt.values.data(),
                         n.attrs.indices.data(),
                         static_cast<int64_t>(n.attrs.indices.size()), tt.dim(1));
    return push(std::move(n));
  }

  ValueId concat(const std::vector<ValueId>& parts, int axis) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    if (axis != 0 && axis != 1) throw std::invalid_argument("concat: axis must be 0 or 1");
    const Tensor<T>& first = value(parts[0]);
    if (first.ndim() != 2) {
      throw std::invalid_argument("concat: operands must be 2-D, got " +
                                  shape_to_string(first.shape));
    }
    int64_t total = 0;
    for (ValueId p : parts) {
      const Tensor<T>& tp = value(p);
      if (tp.ndim() != 2 || tp.dim(1 - axis) != first.dim(1 - axis)) {
        throw std::invalid_argument(std::string("concat: shape mismatch at axis ") +
                                    std::to_string(axis) + ": " +
                                    shape_to_string(first.shape) + " vs " +
                                    shape_to_string(tp.shape));
      }
      total += tp.dim(axis);
    }
    Node n(OpKind::kConcat, parts);
    n.attrs.axis = axis;
    std::vector<int64_t> shape = first.shape;
    shape[static_cast<size_t>(axis)] = total;
    n.out = Tensor<T>(shape);
    int64_t offset = 0;
    for (ValueId p : parts) {
      const Tensor<T>& tp = value(p);
      copy_block(n.out, tp, axis, offset, /*to_out=*/true);
      offset += tp.dim(axis);
    }
    return push(std::move(n));
  }

  ValueId slice(ValueId a, int axis, int64_t start, int64_t len) {
    const Tensor<T>& ta = value(a);
    if (ta.ndim() != 2) {
      throw std::invalid_argument("slice: operand must be 2-D, got " +
                                  shape_to_string(ta.shape));
    }
    if (axis != 0 && axis != 1) throw std::invalid_argument("slice: axis must be 0 or 1");
    if (start < 0 || len <= 0 || start + len > ta.dim(axis)) {
      throw std::invalid_argument("slice: range [" + std::to_string(start) + "," +
                                  std::to_string(start + len) + ") outside " +
                                  shape_to_string(ta.shape) + " axis " +
                                  std::to_string(axis));
    }
    Node n(OpKind::kSlice, {a});
    n.attrs.axis = axis;
    n.attrs.start = start;
    n.attrs.len = len;
    std::vector<int64_t> shape = ta.shape;
    shape[static_cast<size_t>(axis)] = len;
    n.out = Tensor<T>(shape);
    copy_slice(n.out, ta, axis, start, /*forward=*/true);
    return push(std::move(n));
  }

  // Inverted-dropout mask: entries are 0 with probability p, else 1/(1-p).
  // Consumes the graph's rng stream; the mask itself is data, not a
  // differentiable op.
  ValueId dropout_mask(std::vector<int64_t> shape, double p) {
    if (rng_ == nullptr) {
      throw std::logic_error("dropout_mask: graph constructed without rng");
    }
    if (p < 0.0 || p >= 1.0) {
      throw std::invalid_argument("dropout_mask: p must be in [0,1), got " +
                                  std::to_string(p));
    }
    Node n(OpKind::kDropoutMask);
    n.out = Tensor<T>(std::move(shape));
    const T keep = T(1.0 / (1.0 - p));
    for (auto& v : n.out.values) v = (rng_->uniform() >= p) ? keep : T(0);
    return push(std::move(n));
  }

  // Sum over rows of -log_probs[r, targets[r]]; scalar output.
  ValueId cross_entropy(ValueId log_probs, std::vector<int64_t> targets) {
    const Tensor<T>& lp = value(log_probs);
    if (lp.ndim() != 2) {
      throw std::invalid_argument("cross_entropy: log-probs must be 2-D, got " +
                                  shape_to_string(lp.shape));
    }
    if (static_cast<int64_t>(targets.size()) != lp.dim(0)) {
      throw std::invalid_argument("cross_entropy: " + std::to_string(targets.size()) +
                                  " targets for " + std::to_string(lp.dim(0)) + " rows");
    }
    for (int64_t t : targets) {
      if (t < 0 || t >= lp.dim(1)) {
        throw std::out_of_range("cross_entropy: target " + std::to_string(t) +
                                " outside vocabulary of " + std::to_string(lp.dim(1)));
      }
    }
    Node n(OpKind::kCrossEntropy, {log_probs});
    n.attrs.indices = std::move(targets);
    T acc = T(0);
    for (int64_t r = 0; r < lp.dim(0); ++r) acc -= lp.at(r, n.attrs.indices[static_cast<size_t>(r)]);
    n.out = Tensor<T>::scalar(acc);
    return push(std::move(n));
  }

  // Sum over rows of KL(teacher || student) from log-probabilities.
  ValueId kl_divergence(ValueId teacher_lp, ValueId student_lp) {
    const Tensor<T>& t = value(teacher_lp);
    const Tensor<T>& s = value(student_lp);
    if (t.shape != s.shape || t.ndim() != 2) {
      throw std::invalid_argument("kl_divergence: distributions differ: " +
                                  shape_to_string(t.shape) + " vs " +
                                  shape_to_string(s.shape));
    }
    Node n(OpKind::kKlDivergence, {teacher_lp, student_lp});
    T acc = T(0);
    for (int64_t i = 0; i < t.numel(); ++i) {
      acc += std::exp(t.values[static_cast<size_t>(i)]) *
             (t.values[static_cast<size_t>(i)] - s.values[static_cast<size_t>(i)]);
    }
    n.out = Tensor<T>::scalar(acc);
    return push(std::move(n));
  }

  ValueId sum(ValueId a) {
    const Tensor<T>& ta = value(a);
    Node n(OpKind::kSum, {a});
    T acc = T(0);
    for (const T& v : ta.values) acc += v;
    n.out = Tensor<T>::scalar(acc);
    return push(std::move(n));
  }

  // Generic entry point mirroring the typed builders.
  ValueId apply(OpKind kind, const std::vector<ValueId>& inputs,
                const OpAttrs& attrs = {}) {
    switch (kind) {
      case OpKind::kMatmul:
        need(inputs, 2, kind);
        return matmul(inputs[0], inputs[1], attrs.trans_a, attrs.trans_b);
      case OpKind::kAdd: need(inputs, 2, kind); return add(inputs[0], inputs[1]);
      case OpKind::kMul: need(inputs, 2, kind); return mul(inputs[0], inputs[1]);
      case OpKind::kScale: need(inputs, 1, kind); return scale(inputs[0], attrs.factor);
      case OpKind::kSoftmax: need(inputs, 1, kind); return softmax(inputs[0]);
      case OpKind::kLogSoftmax: need(inputs, 1, kind); return log_softmax(inputs[0]);
      case OpKind::kCausalSoftmax: need(inputs, 1, kind); return causal_softmax(inputs[0]);
      case OpKind::kCausalAttention:
        need(inputs, 3, kind);
        return causal_attention(inputs[0], inputs[1], inputs[2], attrs.heads);
      case OpKind::kLayerNorm: need(inputs, 1, kind); return layer_norm(inputs[0]);
      case OpKind::kGelu: need(inputs, 1, kind); return gelu(inputs[0]);
      case OpKind::kEmbeddingLookup:
        need(inputs, 1, kind);
        return embedding_lookup(inputs[0], attrs.indices);
      case OpKind::kConcat: return concat(inputs, attrs.axis);
      case OpKind::kSlice:
        need(inputs, 1, kind);
        return slice(inputs[0], attrs.axis, attrs.start, attrs.len);
      case OpKind::kDropoutMask: return dropout_mask(attrs.shape, attrs.p);
      case OpKind::kCrossEntropy:
        need(inputs, 1, kind);
        return cross_entropy(inputs[0], attrs.indices);
      case OpKind::kKlDivergence:
        need(inputs, 2, kind);
        return kl_divergence(inputs[0], inputs[1]);
      case OpKind::kSum: need(inputs, 1, kind); return sum(inputs[0]);
      case OpKind::kInput:
      case OpKind::kParam:
        break;
    }
    throw std::invalid_argument(std::string("apply: ") + op_name(kind) +
                                " is not constructible through apply");
  }

  // ---- access ----

  const Tensor<T>& value(ValueId id) const { return node(id).external ? *node(id).external : node(id).out; }

  // Gradient buffer of a node after backward; empty span when the node was
  // not on the path to the loss.
  std::span<const T> grad(ValueId id) const {
    const Node& n = node(id);
    if (n.external) return {n.external->grad.data(), n.external->grad.size()};
    return {n.grad.data(), n.grad.size()};
  }

  size_t node_count() const { return nodes_.size(); }
  OpKind kind(ValueId id) const { return node(id).kind; }

  // ---- backward ----

  // Populates gradients of every tracked parameter reachable from `loss`.
  // A graph can be differentiated once; a second call is an error.
  void backward(ValueId loss) {
    const Tensor<T>& lt = value(loss);
    if (lt.numel() != 1) {
      throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                  shape_to_string(lt.shape));
    }
    if (backward_done_) {
      throw std::logic_error("backward: graph already differentiated; build a new graph");
    }
    backward_done_ = true;
    grad_buf(loss)[0] = T(1);
    for (int32_t id = static_cast<int32_t>(nodes_.size()) - 1; id >= 0; --id) {
      Node& n = nodes_[static_cast<size_t>(id)];
      if (grad_span(n).empty()) continue;  // not on the path to loss
      backward_node(n);
    }
  }

 private:
  struct Node {
    explicit Node(OpKind k, std::vector<ValueId> ins = {})
        : kind(k), inputs(std::move(ins)) {}
    OpKind kind;
    std::vector<ValueId> inputs;
    Tensor<T> out;                 // owned output (unused for params)
    Tensor<T> aux;                 // op workspace kept for backward
    Tensor<T>* external = nullptr; // param storage
    std::vector<T> grad;           // local gradient buffer (non-param nodes)
    OpAttrs attrs;
  };

  const Node& node(ValueId id) const {
    if (id < 0 || static_cast<size_t>(id) >= nodes_.size()) {
      throw std::out_of_range("graph: bad value id " + std::to_string(id));
    }
    return nodes_[static_cast<size_t>(id)];
  }
  Node& node(ValueId id) { return const_cast<Node&>(std::as_const(*this).node(id)); }

  ValueId push(Node&& n) {
    nodes_.push_back(std::move(n));
    return static_cast<ValueId>(nodes_.size() - 1);
  }

  static void need(const std::vector<ValueId>& inputs, size_t n, OpKind kind) {
    if (inputs.size() != n) {
      throw std::invalid_argument(std::string("apply: ") + op_name(kind) + " expects " +
                                  std::to_string(n) + " inputs, got " +
                                  std::to_string(inputs.size()));
    }
  }

  // Lazily allocated gradient storage; params write through to external.
  std::span<T> grad_buf(ValueId id) {
    Node& n = node(id);
    if (n.external) {
      n.external->ensure_grad();
      return {n.external->grad.data(), n.external->grad.size()};
    }
    if (n.grad.size() != n.out.values.size()) n.grad.assign(n.out.values.size(), T(0));
    return {n.grad.data(), n.grad.size()};
  }

  std::span<T> grad_span(Node& n) {
    if (n.external) return {n.external->grad.data(), n.external->grad.size()};
    return {n.grad.data(), n.grad.size()};
  }

  // Interprets a tensor as [rows, last_dim] for the row-wise ops.
  static std::pair<int64_t, int64_t> row_view(const Tensor<T>& t) {
    const int64_t cols = t.shape.back();
    return {t.numel() / cols, cols};
  }

  ValueId rowwise(OpKind kind, ValueId a) {
    const Tensor<T>& ta = value(a);
    Node n(kind, {a});
    n.out = Tensor<T>(ta.shape);
    auto [rows, cols] = row_view(ta);
    switch (kind) {
      case OpKind::kSoftmax:
        kernels::row_softmax(n.out.values.data(), ta.values.data(), rows, cols);
        break;
      case OpKind::kLogSoftmax:
        kernels::row_log_softmax(n.out.values.data(), ta.values.data(), rows, cols);
        break;
      case OpKind::kLayerNorm:
        kernels::layer_norm_rows(n.out.values.data(), ta.values.data(), rows, cols,
                                 T(kLayerNormEps));
        break;
      default:
        throw std::logic_error("rowwise: bad kind");
    }
    return push(std::move(n));
  }

  enum class Broadcast { kNone, kPerColumn, kPerRow };

  static Broadcast broadcast_kind(const Tensor<T>& a, const Tensor<T>& b,
                                  OpKind kind) {
    if (a.shape == b.shape) return Broadcast::kNone;
    if (b.ndim() == 1 && a.ndim() == 2 && b.dim(0) == a.dim(1)) {
      return Broadcast::kPerColumn;  // bias vector over every row
    }
    if (b.ndim() == 2 && a.ndim() == 2 && b.dim(0) == a.dim(0) && b.dim(1) == 1) {
      return Broadcast::kPerRow;  // one scalar per row
    }
    throw std::invalid_argument(std::string(op_name(kind)) + ": shapes " +
                                shape_to_string(a.shape) + " and " +
                                shape_to_string(b.shape) + " are incompatible");
  }

  ValueId add_mul(OpKind kind, ValueId a, ValueId b) {
    const Tensor<T>& ta = value(a);
    const Tensor<T>& tb = value(b);
    const Broadcast bc = broadcast_kind(ta, tb, kind);
    Node n(kind, {a, b});
    n.out = Tensor<T>(ta.shape);
    T* out = n.out.values.data();
    const T* av = ta.values.data();
    const T* bv = tb.values.data();
    if (bc == Broadcast::kNone) {
      if (kind == OpKind::kAdd) {
        kernels::add(out, av, bv, ta.numel());
      } else {
        kernels::mul(out, av, bv, ta.numel());
      }
    } else if (bc == Broadcast::kPerColumn) {
      if (kind == OpKind::kAdd) {
        kernels::add_row_broadcast(out, av, bv, ta.dim(0), ta.dim(1));
      } else {
        kernels::mul_row_broadcast(out, av, bv, ta.dim(0), ta.dim(1));
      }
    } else {
      const int64_t rows = ta.dim(0), cols = ta.dim(1);
      for (int64_t r = 0; r < rows; ++r) {
        for (int64_t j = 0; j < cols; ++j) {
          out[r * cols + j] = (kind == OpKind::kAdd) ? av[r * cols + j] + bv[r]
                                                     : av[r * cols + j] * bv[r];
        }
      }
    }
    return push(std::move(n));
  }

  // Copies `part` into/out of the block of `big` starting at `offset` along
  // `axis`.
  static void copy_block(Tensor<T>& big, const Tensor<T>& part, int axis,
                         int64_t offset, bool to_out) {
    (void)to_out;
    if (axis == 0) {
      std::copy(part.values.begin(), part.values.end(),
                big.values.begin() + offset * big.cols());
    } else {
      for (int64_t r = 0; r < part.rows(); ++r) {
        std::copy(part.row_ptr(r), part.row_ptr(r) + part.cols(),
                  big.row_ptr(r) + offset);
      }
    }
  }

  static void copy_slice(Tensor<T>& out, const Tensor<T>& in, int axis,
                         int64_t start, bool forward) {
    (void)forward;
    if (axis == 0) {
      std::copy(in.values.begin() + start * in.cols(),
                in.values.begin() + (start + out.rows()) * in.cols(),
                out.values.begin());
    } else {
      for (int64_t r = 0; r < out.rows(); ++r) {
        std::copy(in.row_ptr(r) + start, in.row_ptr(r) + start + out.cols(),
                  out.row_ptr(r));
      }
    }
  }

  void backward_node(Node& n) {
    std::span<T> g = grad_span(n);
    switch (n.kind) {
      case OpKind::kInput:
      case OpKind::kParam:
      case OpKind::kDropoutMask:
        return;  // leaves
      case OpKind::kMatmul: {
        const Tensor<T>& a = value(n.inputs[0]);
        const Tensor<T>& b = value(n.inputs[1]);
        std::span<T> ga = grad_buf(n.inputs[0]);
        std::span<T> gb = grad_buf(n.inputs[1]);
        const int64_t m = n.out.dim(0), nn = n.out.dim(1);
        if (!n.attrs.trans_a && !n.attrs.trans_b) {
          const int64_t k = a.dim(1);
          // dA = dC * B^T as an NN product against a transposed copy of B;
          // the copy keeps the inner loop vectorizable
          std::vector<T> bt(b.values.size());
          kernels::transpose(bt.data(), b.values.data(), k, nn);
          kernels::matmul_nn(ga.data(), g.data(), bt.data(), m, nn, k, true);
          kernels::matmul_tn(gb.data(), a.values.data(), g.data(), k, m, nn, true);
        } else if (!n.attrs.trans_a && n.attrs.trans_b) {
          const int64_t k = a.dim(1);
          kernels::matmul_nn(ga.data(), g.data(), b.values.data(), m, nn, k, true);
          kernels::matmul_tn(gb.data(), g.data(), a.values.data(), nn, m, k, true);
        } else {  // trans_a
          const int64_t k = a.dim(0);
          kernels::matmul_nt(ga.data(), b.values.data(), g.data(), k, nn, m, true);
          kernels::matmul_nn(gb.data(), a.values.data(), g.data(), k, m, nn, true);
        }
        return;
      }
      case OpKind::kAdd: {
        const Tensor<T>& a = value(n.inputs[0]);
        const Tensor<T>& b = value(n.inputs[1]);
        const Broadcast bc = broadcast_kind(a, b, n.kind);
        std::span<T> ga = grad_buf(n.inputs[0]);
        std::span<T> gb = grad_buf(n.inputs[1]);
        kernels::axpy(ga.data(), g.data(), T(1), n.out.numel());
        if (bc == Broadcast::kNone) {
          kernels::axpy(gb.data(), g.data(), T(1), n.out.numel());
        } else if (bc == Broadcast::kPerColumn) {
          kernels::col_sum_accumulate(gb.data(), g.data(), n.out.dim(0), n.out.dim(1));
        } else {
          const int64_t rows = n.out.dim(0), cols = n.out.dim(1);
          for (int64_t r = 0; r < rows; ++r) {
            T acc = T(0);
            for (int64_t j = 0; j < cols; ++j) acc += g[static_cast<size_t>(r * cols + j)];
            gb[static_cast<size_t>(r)] += acc;
          }
        }
        return;
      }
      case OpKind::kMul: {
        const Tensor<T>& a = value(n.inputs[0]);
        const Tensor<T>& b = value(n.inputs[1]);
        const Broadcast bc = broadcast_kind(a, b, n.kind);
        std::span<T> ga = grad_buf(n.inputs[0]);
        std::span<T> gb = grad_buf(n.inputs[1]);
        if (bc == Broadcast::kNone) {
          for (int64_t i = 0; i < n.out.numel(); ++i) {
            ga[static_cast<size_t>(i)] += g[static_cast<size_t>(i)] * b.values[static_cast<size_t>(i)];
            gb[static_cast<size_t>(i)] += g[static_cast<size_t>(i)] * a.values[static_cast<size_t>(i)];
          }
        } else if (bc == Broadcast::kPerColumn) {
          const int64_t rows = a.dim(0), cols = a.dim(1);
          for (int64_t r = 0; r < rows; ++r) {
            for (int64_t j = 0; j < cols; ++j) {
              ga[static_cast<size_t>(r * cols + j)] +=
                  g[static_cast<size_t>(r * cols + j)] * b.values[static_cast<size_t>(j)];
            }
          }
          for (int64_t j = 0; j < cols; ++j) {
            T acc = T(0);
            for (int64_t r = 0; r < rows; ++r) {
              acc += g[static_cast<size_t>(r * cols + j)] * a.values[static_cast<size_t>(r * cols + j)];
            }
            gb[static_cast<size_t>(j)] += acc;
          }
        } else {
          const int64_t rows = a.dim(0), cols = a.dim(1);
          for (int64_t r = 0; r < rows; ++r) {
            T acc = T(0);
            for (int64_t j = 0; j < cols; ++j) {
              ga[static_cast<size_t>(r * cols + j)] += g[static_cast<size_t>(r * cols + j)] * b.values[static_cast<size_t>(r)];
              acc += g[static_cast<size_t>(r * cols + j)] * a.values[static_cast<size_t>(r * cols + j)];
            }
            gb[static_cast<size_t>(r)] += acc;
          }
        }
        return;
      }
      case OpKind::kScale: {
        std::span<T> ga = grad_buf(n.inputs[0]);
        kernels::axpy(ga.data(), g.data(), T(n.attrs.factor), n.out.numel());
        return;
      }
      case OpKind::kSoftmax: {
        auto [rows, cols] = row_view(n.out);
        kernels::softmax_backward(grad_buf(n.inputs[0]).data(), g.data(),
                                  n.out.values.data(), rows, cols);
        return;
      }
      case OpKind::kLogSoftmax: {
        auto [rows, cols] = row_view(n.out);
        kernels::log_softmax_backward(grad_buf(n.inputs[0]).data(), g.data(),
                                      n.out.values.data(), rows, cols);
        return;
      }
      case OpKind::kCausalSoftmax: {
        kernels::causal_softmax_backward(grad_buf(n.inputs[0]).data(), g.data(),
                                         n.out.values.data(), n.out.dim(0));
        return;
      }
      case OpKind::kCausalAttention: {
        const Tensor<T>& q = value(n.inputs[0]);
        const Tensor<T>& k = value(n.inputs[1]);
        const Tensor<T>& v = value(n.inputs[2]);
        std::span<T> dq = grad_buf(n.inputs[0]);
        std::span<T> dk = grad_buf(n.inputs[1]);
        std::span<T> dv = grad_buf(n.inputs[2]);
        kernels::causal_attention_backward(dq.data(), dk.data(), dv.data(), g.data(),
                                           n.aux.values.data(), q.values.data(),
                                           k.values.data(), v.values.data(), q.dim(0),
                                           q.dim(1), n.attrs.heads,
                                           n.attrs.indices.data(), n.attrs.len);
        return;
      }
      case OpKind::kLayerNorm: {
        const Tensor<T>& a = value(n.inputs[0]);
        auto [rows, cols] = row_view(a);
        kernels::layer_norm_backward(grad_buf(n.inputs[0]).data(), g.data(),
                                     a.values.data(), rows, cols, T(kLayerNormEps));
        return;
      }
      case OpKind::kGelu: {
        const Tensor<T>& a = value(n.inputs[0]);
        kernels::gelu_backward(grad_buf(n.inputs[0]).data(), g.data(),
                               a.values.data(), a.numel());
        return;
      }
      case OpKind::kEmbeddingLookup: {
        const Tensor<T>& table = value(n.inputs[0]);
        kernels::scatter_add_rows(grad_buf(n.inputs[0]).data(), g.data(),
                                  n.attrs.indices.data(),
                                  static_cast<int64_t>(n.attrs.indices.size()),
                                  table.dim(1));
        return;
      }
      case OpKind::kConcat: {
        const int axis = n.attrs.axis;
        int64_t offset = 0;
        for (ValueId in : n.inputs) {
          const Tensor<T>& part = value(in);
          std::span<T> gp = grad_buf(in);
          if (axis == 0) {
            const int64_t base = offset * n.out.cols();
            for (int64_t i = 0; i < part.numel(); ++i) {
              gp[static_cast<size_t>(i)] += g[static_cast<size_t>(base + i)];
            }
          } else {
            for (int64_t r = 0; r < part.rows(); ++r) {
              for (int64_t j = 0; j < part.cols(); ++j) {
                gp[static_cast<size_t>(r * part.cols() + j)] +=
                    g[static_cast<size_t>(r * n.out.cols() + offset + j)];
              }
            }
          }
          offset += part.dim(axis);
        }
        return;
      }
      case OpKind::kSlice: {
        const Tensor<T>& a = value(n.inputs[0]);
        std::span<T> ga = grad_buf(n.inputs[0]);
        const int axis = n.attrs.axis;
        const int64_t start = n.attrs.start;
        if (axis == 0) {
          const int64_t base = start * a.cols();
          for (int64_t i = 0; i < n.out.numel(); ++i) {
            ga[static_cast<size_t>(base + i)] += g[static_cast<size_t>(i)];
          }
        } else {
          for (int64_t r = 0; r < n.out.rows(); ++r) {
            for (int64_t j = 0; j < n.out.cols(); ++j) {
              ga[static_cast<size_t>(r * a.cols() + start + j)] +=
                  g[static_cast<size_t>(r * n.out.cols() + j)];
            }
          }
        }
        return;
      }
      case OpKind::kCrossEntropy: {
        const Tensor<T>& lp = value(n.inputs[0]);
        std::span<T> ga = grad_buf(n.inputs[0]);
        const T gs = g[0];
        for (int64_t r = 0; r < lp.dim(0); ++r) {
          ga[static_cast<size_t>(r * lp.dim(1) + n.attrs.indices[static_cast<size_t>(r)])] -= gs;
        }
        return;
      }
      case OpKind::kKlDivergence: {
        const Tensor<T>& t = value(n.inputs[0]);
        const Tensor<T>& s = value(n.inputs[1]);
        std::span<T> gt = grad_buf(n.inputs[0]);
        std::span<T> gs = grad_buf(n.inputs[1]);
        const T gv = g[0];
        for (int64_t i = 0; i < t.numel(); ++i) {
          const T pt = std::exp(t.values[static_cast<size_t>(i)]);
          gs[static_cast<size_t>(i)] -= gv * pt;
          gt[static_cast<size_t>(i)] +=
              gv * pt * (T(1) + t.values[static_cast<size_t>(i)] - s.values[static_cast<size_t>(i)]);
        }
        return;
      }
      case OpKind::kSum: {
        std::span<T> ga = grad_buf(n.inputs[0]);
        const T gs = g[0];
        for (auto& v : ga) v += gs;
        return;
      }
    }
  }

  static constexpr double kLayerNormEps = 1e-5;

  std::vector<Node> nodes_;
  Rng* rng_;
  bool backward_done_ = false;
};

}  // namespace tlm

#endif  // TLM_GRAPH_HPP_
