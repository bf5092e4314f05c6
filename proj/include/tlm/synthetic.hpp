// Copyright 2026 The tlm Authors
// Licensed under the Apache License, Version 2.0
//
// Desk-scale synthetic data: an order-k Markov word source with an exactly
// computable entropy rate, a weak smoothed bigram LM standing in for the
// first-pass n-gram model, and an n-best generator that corrupts references
// with known noise.

#ifndef TLM_SYNTHETIC_HPP_
#define TLM_SYNTHETIC_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "tlm/rescorer.hpp"
#include "tlm/rng.hpp"

namespace tlm {

struct SyntheticSourceParams {
  int order = 2;
  int64_t vocab_size = 50;
  int64_t branching = 5;     // preferred next words per history
  double smoothing = 0.05;   // uniform mass mixed into every distribution
  uint64_t seed = 1;
};

// Order-k Markov source over a closed word vocabulary. Each history row is
// a categorical distribution with `smoothing` uniform mass, which keeps the
// history chain irreducible and the stationary distribution well defined.
class SyntheticSource {
 public:
  static SyntheticSource make(const SyntheticSourceParams& params);

  int order() const { return params_.order; }
  int64_t vocab_size() const { return params_.vocab_size; }
  const std::vector<std::string>& words() const { return words_; }
  int64_t num_histories() const { return num_histories_; }
  const double* row(int64_t history) const {
    return table_.data() + history * params_.vocab_size;
  }

  // Stationary distribution over histories (power iteration, cached).
  const std::vector<double>& stationary() const { return stationary_; }

  // Per-word entropy rate in nats: -sum_h pi(h) sum_w p(w|h) log p(w|h).
  double entropy_rate() const;

  // Per-token perplexity floor for lines of `words_per_line` words scored
  // as BOS w_1..w_L EOS: the first `order` words cost the stationary joint
  // entropy, the rest cost the rate, and EOS is free at a fixed length.
  double analytic_token_ppl(int64_t words_per_line) const;

  // One line of `words_per_line` words; the initial history is drawn from
  // the stationary distribution.
  std::string sample_line(Rng& rng, int64_t words_per_line) const;
  std::vector<std::string> generate_corpus(Rng& rng, int64_t lines,
                                           int64_t words_per_line) const;

  // JSON round-trip so one source can feed corpus generation, n-best
  // generation and the analytic targets across CLI invocations.
  std::string to_json() const;
  static SyntheticSource from_json(const std::string& text);

 private:
  SyntheticSource() = default;
  void finalize();  // stationary distribution + checks

  SyntheticSourceParams params_;
  std::vector<std::string> words_;
  int64_t num_histories_ = 0;
  std::vector<double> table_;  // [num_histories, vocab]
  std::vector<double> stationary_;
};

// Add-k smoothed bigram word LM; the deliberately weak first-pass language
// score for synthetic n-best lists.
class BigramLm {
 public:
  void train(const std::vector<std::string>& lines, double add_k = 0.5);
  // Natural-log probability of the sentence including the end transition.
  double log_prob(const std::string& sentence) const;

 private:
  double add_k_ = 0.5;
  int64_t vocab_ = 0;
  std::unordered_map<std::string, int64_t> word_id_;
  std::unordered_map<int64_t, int64_t> unigram_;          // context counts
  std::unordered_map<int64_t, int64_t> bigram_;           // packed (a,b) counts
  int64_t id_or_unk(const std::string& w) const;
};

struct SynthNbestParams {
  int64_t n = 50;            // candidates per utterance (reference included)
  double sub_rate = 0.15;
  double ins_rate = 0.05;
  double del_rate = 0.05;
  double am_edit_weight = 2.0;   // acoustic score: -weight * edits + noise
  double am_noise = 1.5;
  uint64_t seed = 1;
};

// References sampled from the source; candidates are the reference plus
// n-1 corrupted variants. Acoustic scores are reference-similarity-
// correlated noisy log-scores, n-gram scores come from `ngram` (trained on
// an intentionally small slice), and candidates are ordered by descending
// am + ngram, i.e. first-pass rank.
std::vector<NBestRecord> synth_nbest(const SyntheticSource& source,
                                     const BigramLm& ngram,
                                     const SynthNbestParams& params, int64_t utterances,
                                     int64_t words_per_line);

}  // namespace tlm

#endif  // TLM_SYNTHETIC_HPP_
