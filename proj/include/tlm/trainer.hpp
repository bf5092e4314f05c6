// Copyright 2026 The tlm Authors
// Licensed under the Apache License, Version 2.0
//
// Training loops: cross-entropy, knowledge distillation against a frozen
// teacher, and the pretrain-then-fine-tune schedule. All randomness is
// derived from TrainConfig::seed, and one (seed, config, data) triple
// reproduces the same trajectory bit for bit.

#ifndef TLM_TRAINER_HPP_
#define TLM_TRAINER_HPP_

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tlm/adam.hpp"
#include "tlm/evaluator.hpp"
#include "tlm/model.hpp"
#include "tlm/model_io.hpp"

namespace tlm {

struct KDConfig {
  double alpha = 0.1;        // weight on hard-label cross-entropy
  double temperature = 1.0;  // applied to both distributions; KL scaled by T^2
  double student_dropout_override = 0.0;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  int64_t warmup_steps = 0;  // 0 = default to 1% of max_steps
  int64_t batch_size = 16;   // sequences per step
  int64_t max_steps = 100;
  int64_t eval_interval = 50;
  double clip_norm = 1.0;    // <= 0 disables clipping
  uint64_t seed = 1;
  std::string checkpoint_dir;  // empty = keep best in memory only
  std::string log_path;        // empty = no JSONL log

  int64_t effective_warmup() const {
    return warmup_steps > 0 ? warmup_steps : std::max<int64_t>(1, max_steps / 100);
  }
};

// Documents packed to max_context windows: every line becomes
// BOS tokens... EOS, lines are concatenated, and the stream is cut into
// (max_context + 1)-token windows so each window yields max_context
// (input, target) pairs.
struct TrainData {
  std::vector<std::vector<int64_t>> chunks;
  std::vector<std::vector<int64_t>> dev_lines;  // raw token lines, no BOS/EOS
  int64_t vocab_size = 0;

  bool empty() const { return chunks.empty(); }
};

inline TrainData make_train_data(const std::vector<std::vector<int64_t>>& train_lines,
                                 std::vector<std::vector<int64_t>> dev_lines,
                                 int64_t vocab_size, int64_t max_context) {
  TrainData data;
  data.vocab_size = vocab_size;
  data.dev_lines = std::move(dev_lines);
  std::vector<int64_t> stream;
  for (const auto& line : train_lines) {
    stream.push_back(Vocabulary::kBosId);
    for (int64_t id : line) {
      if (id < 0 || id >= vocab_size) {
        throw std::invalid_argument("make_train_data: token id " + std::to_string(id) +
                                    " outside vocabulary of " + std::to_string(vocab_size));
      }
      stream.push_back(id);
    }
    stream.push_back(Vocabulary::kEosId);
  }
  const int64_t window = max_context + 1;
  for (size_t start = 0; start + 1 < stream.size();
       start += static_cast<size_t>(max_context)) {
    const size_t end = std::min(stream.size(), start + static_cast<size_t>(window));
    data.chunks.emplace_back(stream.begin() + static_cast<int64_t>(start),
                             stream.begin() + static_cast<int64_t>(end));
    if (end == stream.size()) break;
  }
  return data;
}

struct EvalRecord {
  int64_t step = 0;
  double train_loss = 0.0;  // NaN before the first optimization step
  double dev_loss = 0.0;
  double dev_ppl = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  std::vector<EvalRecord> history;
  double best_dev_ppl = 0.0;
  int64_t best_step = 0;
};

// Sum-form CE and KL pieces shared by kd_loss and the KD training loop.
// Both distributions are tempered by T before the KL; the caller applies
// the alpha/(1-alpha)T^2 weights and normalization.
template <typename T>
std::pair<ValueId, ValueId> kd_loss_sums(Graph<T>& g, ValueId student_lp,
                                         ValueId teacher_lp,
                                         std::span<const int64_t> gold,
                                         const KDConfig& kd) {
  const Tensor<T>& s = g.value(student_lp);
  const Tensor<T>& t = g.value(teacher_lp);
  if (s.ndim() != 2 || t.ndim() != 2 || s.dim(1) != t.dim(1)) {
    throw std::invalid_argument("kd_loss: student vocabulary " +
                                std::to_string(s.ndim() == 2 ? s.dim(1) : -1) +
                                " does not match teacher vocabulary " +
                                std::to_string(t.ndim() == 2 ? t.dim(1) : -1));
  }
  if (kd.temperature <= 0.0) {
    throw std::invalid_argument("kd_loss: temperature must be positive");
  }
  const ValueId ce = g.cross_entropy(student_lp, {gold.begin(), gold.end()});
  const double inv_t = 1.0 / kd.temperature;
  const ValueId teacher_t = g.log_softmax(g.scale(teacher_lp, inv_t));
  const ValueId student_t = g.log_softmax(g.scale(student_lp, inv_t));
  const ValueId kl = g.kl_divergence(teacher_t, student_t);
  return {ce, kl};
}

// loss = alpha * CE(student, gold) + (1 - alpha) * T^2 * KL(teacher_T || student_T),
// both terms per-token means over the rows of the inputs.
template <typename T>
ValueId kd_loss(Graph<T>& g, ValueId student_lp, ValueId teacher_lp,
                std::span<const int64_t> gold, const KDConfig& kd) {
  if (kd.alpha < 0.0 || kd.alpha > 1.0) {
    throw std::invalid_argument("kd_loss: alpha must be in [0,1]");
  }
  auto [ce, kl] = kd_loss_sums(g, student_lp, teacher_lp, gold, kd);
  const double n = static_cast<double>(g.value(student_lp).dim(0));
  const double t2 = kd.temperature * kd.temperature;
  return g.add(g.scale(ce, kd.alpha / n), g.scale(kl, (1.0 - kd.alpha) * t2 / n));
}

namespace detail {

inline double lr_at(const TrainConfig& cfg, int64_t step) {
  const int64_t warmup = cfg.effective_warmup();
  if (step < warmup) {
    return cfg.learning_rate * static_cast<double>(step + 1) / static_cast<double>(warmup);
  }
  if (cfg.max_steps <= warmup) return cfg.learning_rate;
  const double progress = static_cast<double>(step - warmup) /
                          static_cast<double>(cfg.max_steps - warmup);
  return cfg.learning_rate * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

// Shuffled-epoch batch sampler.
class BatchSampler {
 public:
  BatchSampler(size_t n, Rng rng) : rng_(rng), perm_(n) {
    for (size_t i = 0; i < n; ++i) perm_[i] = i;
    reshuffle();
  }
  size_t next() {
    if (cursor_ == perm_.size()) {
      reshuffle();
      cursor_ = 0;
    }
    return perm_[cursor_++];
  }

 private:
  void reshuffle() {
    for (size_t i = perm_.size(); i > 1; --i) {
      std::swap(perm_[i - 1], perm_[rng_.uniform_int(i)]);
    }
  }
  Rng rng_;
  std::vector<size_t> perm_;
  size_t cursor_ = 0;
};

template <typename T>
struct BestTracker {
  double best_ppl = std::numeric_limits<double>::infinity();
  int64_t best_step = -1;
  std::vector<std::vector<T>> best_values;

  void offer(const ModelParameters<T>& params, double ppl, int64_t step) {
    if (best_step >= 0 && ppl >= best_ppl) return;
    best_ppl = ppl;
    best_step = step;
    best_values.clear();
    for (const auto& t : params.tensors) best_values.push_back(t.values);
  }
  void restore(ModelParameters<T>& params) const {
    for (size_t i = 0; i < best_values.size(); ++i) params.tensors[i].values = best_values[i];
  }
};

inline void append_log(const std::string& path, const EvalRecord& rec) {
  if (path.empty()) return;
  std::ofstream f(path, std::ios::app);
  nlohmann::json j{{"step", rec.step},
                   {"train_loss", rec.train_loss},
                   {"dev_loss", rec.dev_loss},
                   {"dev_ppl", rec.dev_ppl},
                   {"seconds", rec.seconds}};
  f << j.dump() << "\n";
}

// Core loop shared by CE and KD training; `build_batch_loss` assembles the
// scalar loss for a set of chunks on a fresh graph.
template <typename T, typename LossBuilder>
TrainResult run_training(ModelParameters<T>& params, const TrainData& data,
                         const TrainConfig& cfg, LossBuilder&& build_batch_loss) {
  if (data.empty()) throw std::invalid_argument("train: no training chunks");
  if (data.vocab_size != params.config.vocab_size) {
    throw std::invalid_argument("train: data tokenized for vocabulary " +
                                std::to_string(data.vocab_size) + ", model has " +
                                std::to_string(params.config.vocab_size));
  }
  TrainResult result;
  AdamState<T> adam = AdamState<T>::zeros_like(params.tensors);
  BatchSampler sampler(data.chunks.size(), Rng::derive(cfg.seed, "batching"));
  Rng dropout_rng = Rng::derive(cfg.seed, "dropout");
  BestTracker<T> best;
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&t0]() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  auto evaluate = [&](int64_t step, double train_loss) {
    EvalRecord rec;
    rec.step = step;
    rec.train_loss = train_loss;
    rec.dev_ppl = data.dev_lines.empty() ? std::numeric_limits<double>::quiet_NaN()
                                         : perplexity(params, data.dev_lines);
    rec.dev_loss = std::log(rec.dev_ppl);
    rec.seconds = elapsed();
    result.history.push_back(rec);
    append_log(cfg.log_path, rec);
    if (!data.dev_lines.empty()) best.offer(params, rec.dev_ppl, step);
  };

  evaluate(0, std::numeric_limits<double>::quiet_NaN());
  for (int64_t step = 0; step < cfg.max_steps; ++step) {
    std::vector<size_t> batch(static_cast<size_t>(cfg.batch_size));
    for (auto& b : batch) b = sampler.next();

    params.zero_grads();
    Graph<T> g(&dropout_rng);
    const ValueId loss = build_batch_loss(g, batch);
    const double loss_value = static_cast<double>(g.value(loss).values[0]);
    if (!std::isfinite(loss_value)) {
      throw std::runtime_error("train: non-finite loss " + std::to_string(loss_value) +
                               " at step " + std::to_string(step + 1) +
                               "; training diverged");
    }
    g.backward(loss);
    if (cfg.clip_norm > 0.0) clip_grad_norm(params.tensors, cfg.clip_norm);
    adam_step(params.tensors, adam, lr_at(cfg, step));

    if ((step + 1) % cfg.eval_interval == 0 || step + 1 == cfg.max_steps) {
      evaluate(step + 1, loss_value);
    }
  }

  if (best.best_step >= 0) {
    best.restore(params);
    result.best_dev_ppl = best.best_ppl;
    result.best_step = best.best_step;
    if (!cfg.checkpoint_dir.empty()) {
      std::filesystem::create_directories(cfg.checkpoint_dir);
      save_checkpoint(params, cfg.checkpoint_dir + "/best.ckpt");
      save_adam_state(adam, params, cfg.checkpoint_dir + "/best.adam");
    }
  }
  return result;
}

}  // namespace detail

// Minimizes mean per-token negative log-likelihood; keeps the best-dev
// parameters in `params` when dev data is present.
template <typename T>
TrainResult train_ce(ModelParameters<T>& params, const TrainData& data,
                     const TrainConfig& cfg) {
  const double dropout = params.config.dropout;
  return detail::run_training(params, data, cfg, [&](Graph<T>& g, const std::vector<size_t>& batch) {
    TokenSpans inputs;
    std::vector<int64_t> targets;
    for (size_t idx : batch) {
      const auto& chunk = data.chunks[idx];
      inputs.emplace_back(chunk.data(), chunk.size() - 1);
      targets.insert(targets.end(), chunk.begin() + 1, chunk.end());
    }
    const ValueId nll = build_nll_sum(g, params, inputs, targets, ForwardOptions{dropout});
    return g.scale(nll, 1.0 / static_cast<double>(targets.size()));
  });
}

// Knowledge distillation: the teacher runs in inference mode (no dropout,
// no gradients) over each batch chunk; the student minimizes
// alpha*CE + (1-alpha)*T^2*KL, with dropout forced to the override value.
template <typename T>
TrainResult train_kd(ModelParameters<T>& student, ModelParameters<T>& teacher,
                     const TrainData& data, const KDConfig& kd,
                     const TrainConfig& cfg) {
  if (teacher.config.vocab_size != student.config.vocab_size) {
    throw std::invalid_argument("train_kd: teacher vocabulary " +
                                std::to_string(teacher.config.vocab_size) +
                                " does not match student vocabulary " +
                                std::to_string(student.config.vocab_size));
  }
  if (kd.alpha < 0.0 || kd.alpha > 1.0) {
    throw std::invalid_argument("train_kd: alpha must be in [0,1]");
  }
  const double dropout = kd.student_dropout_override;
  const double t2 = kd.temperature * kd.temperature;
  return detail::run_training(student, data, cfg, [&](Graph<T>& g, const std::vector<size_t>& batch) {
    TokenSpans inputs;
    std::vector<int64_t> targets;
    for (size_t idx : batch) {
      const auto& chunk = data.chunks[idx];
      inputs.emplace_back(chunk.data(), chunk.size() - 1);
      targets.insert(targets.end(), chunk.begin() + 1, chunk.end());
    }
    const ValueId student_lp = build_log_probs(g, student, inputs, ForwardOptions{dropout});
    const ValueId teacher_lp = g.input(forward_log_probs(teacher, inputs));
    auto [ce, kl] = kd_loss_sums(g, student_lp, teacher_lp, targets, kd);
    const double inv_n = 1.0 / static_cast<double>(targets.size());
    return g.add(g.scale(ce, kd.alpha * inv_n),
                 g.scale(kl, (1.0 - kd.alpha) * t2 * inv_n));
  });
}

struct PretrainFinetuneResult {
  TrainResult pretrain;
  TrainResult finetune;
};

// Phase 1 trains on the general corpus; phase 2 continues from the phase-1
// best checkpoint on the target corpus with a fresh optimizer. An empty
// general corpus degenerates to plain fine-tuning. Both corpora must share
// one vocabulary.
template <typename T>
PretrainFinetuneResult pretrain_finetune(ModelParameters<T>& params,
                                         const TrainData& general,
                                         const TrainData& target,
                                         const TrainConfig& pretrain_cfg,
                                         const TrainConfig& finetune_cfg) {
  if (!general.empty() && general.vocab_size != target.vocab_size) {
    throw std::invalid_argument("pretrain_finetune: phase vocabularies differ: " +
                                std::to_string(general.vocab_size) + " vs " +
                                std::to_string(target.vocab_size));
  }
  PretrainFinetuneResult result;
  if (!general.empty()) {
    result.pretrain = train_ce(params, general, pretrain_cfg);
  }
  result.finetune = train_ce(params, target, finetune_cfg);
  return result;
}

}  // namespace tlm

#endif  // TLM_TRAINER_HPP_
