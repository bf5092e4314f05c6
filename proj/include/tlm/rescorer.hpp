// Copyright 2026 The tlm Authors
// Licensed under the Apache License, Version 2.0
//
// Second-pass n-best rescoring. All scores are natural-log, higher-is-
// better; the combined score is am + alpha * ngram + (1 - alpha) * nlm.
// Candidate lists arrive as JSON-lines records from the first pass.

#ifndef TLM_RESCORER_HPP_
#define TLM_RESCORER_HPP_

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "tlm/bpe.hpp"
#include "tlm/evaluator.hpp"
#include "tlm/model.hpp"

namespace tlm {

inline constexpr int64_t kDefaultNBestMax = 50;

struct Candidate {
  std::string text;
  double am_score = 0.0;
  double ngram_score = 0.0;
  std::optional<double> nlm_score;  // -inf when scoring failed (flagged below)
  bool nlm_failed = false;
};

struct NBestRecord {
  std::string utterance_id;
  std::optional<std::string> reference;
  std::vector<Candidate> candidates;
};

struct RescoreWeights {
  double alpha = 0.5;  // interpolation between n-gram (alpha) and neural LM
};

inline void validate_weights(const RescoreWeights& w) {
  if (w.alpha < 0.0 || w.alpha > 1.0) {
    throw std::invalid_argument("rescore: alpha must be in [0,1], got " +
                                std::to_string(w.alpha));
  }
}

// s = am + alpha * ngram + (1 - alpha) * nlm. The endpoint weights skip
// their zero term so a -inf sentinel on the unused side cannot poison the
// score. Requires nlm_score to be present.
double combine(const Candidate& c, const RescoreWeights& weights);

// Argmax of combine over the record's candidates; ties break toward the
// earlier (better first-pass) index. Errors on an empty candidate list.
size_t select_top(const NBestRecord& record, const RescoreWeights& weights);

// Fills nlm_score = log P(BOS + encode(text) + EOS) for every candidate.
// Per-candidate failures (empty text) keep the candidate with a -inf
// sentinel and a failure flag; empty candidate lists pass through with a
// warning. Records are independent, so scoring parallelizes across
// candidates; output order is untouched.
template <typename T>
std::vector<std::string> score_nbest(std::vector<NBestRecord>& records,
                                     ModelParameters<T>& model,
                                     const MergeTable& merges, const Vocabulary& vocab,
                                     bool lowercase = false) {
  std::vector<std::string> warnings;
  struct Job {
    Candidate* candidate;
    std::vector<int64_t> ids;
  };
  std::vector<Job> jobs;
  for (auto& record : records) {
    if (record.candidates.empty()) {
      warnings.push_back("rescore: utterance '" + record.utterance_id +
                         "' has no candidates; passed through unchanged");
      continue;
    }
    for (auto& c : record.candidates) {
      std::vector<int64_t> ids = encode(c.text, merges, vocab, lowercase);
      if (ids.empty()) {
        c.nlm_score = -std::numeric_limits<double>::infinity();
        c.nlm_failed = true;
        warnings.push_back("rescore: utterance '" + record.utterance_id +
                           "' has an empty candidate; nlm set to -inf");
        continue;
      }
      std::vector<int64_t> seq;
      seq.reserve(ids.size() + 2);
      seq.push_back(Vocabulary::kBosId);
      seq.insert(seq.end(), ids.begin(), ids.end());
      seq.push_back(Vocabulary::kEosId);
      jobs.push_back(Job{&c, std::move(seq)});
    }
  }
  const int64_t n = static_cast<int64_t>(jobs.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (int64_t i = 0; i < n; ++i) {
    Job& job = jobs[static_cast<size_t>(i)];
    job.candidate->nlm_score = sequence_log_prob(model, job.ids).total;
    job.candidate->nlm_failed = false;
  }
  return warnings;
}

struct AlphaTuneResult {
  double best_alpha = 1.0;
  double best_wer = 0.0;
  std::vector<std::pair<double, double>> curve;  // (alpha, corpus WER)
};

// Default grid 0, 0.05, ..., 1.
std::vector<double> default_alpha_grid(double step = 0.05);

// Picks the grid alpha minimizing corpus-level dev WER over the records
// (references required, candidates scored); ties break toward the larger
// alpha, staying closer to the first-pass ranking.
AlphaTuneResult tune_alpha(const std::vector<NBestRecord>& dev_records,
                           const std::vector<double>& grid);

// JSON-lines n-best file: one record per line,
//   {"utt_id": str, "ref": str|null, "hyps": [{"text","am","ngram"}]}.
// With scores_are_costs the am/ngram signs are flipped at ingestion.
// Output adds "nlm" per hypothesis (null when failed) and, when selections
// are given, a top-level "selected" index.
std::vector<NBestRecord> load_nbest(const std::string& path, bool scores_are_costs = false,
                                    int64_t n_max = kDefaultNBestMax);
void save_nbest(const std::string& path, const std::vector<NBestRecord>& records,
                const std::vector<size_t>* selected = nullptr);

}  // namespace tlm

#endif  // TLM_RESCORER_HPP_
