// Copyright 2026 The tlm Authors
// Licensed under the Apache License, Version 2.0

#ifndef TLM_EVALUATOR_HPP_
#define TLM_EVALUATOR_HPP_

#include <chrono>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tlm/kernels.hpp"
#include "tlm/model.hpp"

namespace tlm {

struct WerBreakdown {
  int64_t substitutions = 0;
  int64_t insertions = 0;
  int64_t deletions = 0;
  int64_t reference_words = 0;

  int64_t errors() const { return substitutions + insertions + deletions; }
  double wer() const {
    return 100.0 * static_cast<double>(errors()) /
           static_cast<double>(reference_words);
  }
};

// Whitespace tokenization used for word-level scoring (case-sensitive).
std::vector<std::string> split_whitespace(std::string_view text);

// Minimum-edit-distance alignment with unit costs; among minimal
// alignments, substitutions are preferred over insertion+deletion pairs.
// The reference may not be empty.
WerBreakdown wer(const std::vector<std::string>& reference,
                 const std::vector<std::string>& hypothesis);
WerBreakdown wer(std::string_view reference, std::string_view hypothesis);

// Corpus-level aggregation: errors and reference words are summed over all
// utterances before dividing (not averaged per utterance).
WerBreakdown corpus_wer(
    const std::vector<std::pair<std::string, std::string>>& ref_hyp_pairs);

// Relative WER reduction in percent: 100 * (baseline - system) / baseline.
double werr(double baseline_wer, double system_wer);

// exp(mean per-token negative log-likelihood) over BPE units, EOS included;
// each line is scored as BOS + tokens + EOS.
template <typename T>
double perplexity(ModelParameters<T>& model,
                  const std::vector<std::vector<int64_t>>& tokenized_lines) {
  if (tokenized_lines.empty()) {
    throw std::invalid_argument("perplexity: empty corpus");
  }
  double total_nll = 0.0;
  int64_t total_tokens = 0;
  for (const auto& line : tokenized_lines) {
    std::vector<int64_t> seq;
    seq.reserve(line.size() + 2);
    seq.push_back(Vocabulary::kBosId);
    seq.insert(seq.end(), line.begin(), line.end());
    seq.push_back(Vocabulary::kEosId);
    const SequenceScore s = sequence_log_prob(model, seq);
    total_nll -= s.total;
    total_tokens += static_cast<int64_t>(s.per_token.size());
  }
  if (total_tokens == 0) throw std::invalid_argument("perplexity: corpus has no tokens");
  return std::exp(total_nll / static_cast<double>(total_tokens));
}

struct BenchReport {
  std::string model_id;
  int64_t candidate_count = 0;
  int repetitions = 0;
  int threads = 0;
  std::vector<double> per_repetition_seconds;
  double mean_seconds = 0.0;
};

inline double speedup(const BenchReport& a, const BenchReport& b) {
  return b.mean_seconds / a.mean_seconds;
}

// Scores the full candidate sample once per repetition on the wall clock
// (monotonic); one warm-up pass runs first and is not measured. Candidates
// are independent, so each pass parallelizes across them.
template <typename T>
BenchReport bench_latency(ModelParameters<T>& model, const std::string& model_id,
                          const std::vector<std::vector<int64_t>>& candidate_ids,
                          int repetitions = 10) {
  if (repetitions < 1) throw std::invalid_argument("bench_latency: repetitions < 1");
  if (candidate_ids.empty()) throw std::invalid_argument("bench_latency: empty sample");
  BenchReport report;
  report.model_id = model_id;
  report.candidate_count = static_cast<int64_t>(candidate_ids.size());
  report.repetitions = repetitions;
  report.threads = kernels::max_threads();

  auto run_pass = [&]() {
    const int64_t n = static_cast<int64_t>(candidate_ids.size());
#pragma omp parallel for schedule(dynamic, 8)
    for (int64_t i = 0; i < n; ++i) {
      (void)sequence_log_prob(model, candidate_ids[static_cast<size_t>(i)]);
    }
  };

  run_pass();  // warm-up, excluded from the measured repetitions
  double sum = 0.0;
  for (int r = 0; r < repetitions; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    run_pass();
    const auto t1 = std::chrono::steady_clock::now();
    const double secs = std::chrono::duration<double>(t1 - t0).count();
    report.per_repetition_seconds.push_back(secs);
    sum += secs;
  }
  report.mean_seconds = sum / repetitions;
  return report;
}

// Result table mirroring the rescoring comparison layout.
struct ResultRow {
  std::string approach;
  std::string bpe;     // e.g. "10K" or "-"
  std::string params;  // e.g. "14.7M" or "-"
  double wer = 0.0;
  double werr = 0.0;   // percent vs baseline; NaN hides the column entry
  bool has_werr = false;
};

std::string format_results_table(const std::vector<ResultRow>& rows);
std::string format_param_count(int64_t params);

}  // namespace tlm

#endif  // TLM_EVALUATOR_HPP_
