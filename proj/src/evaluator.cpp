// Copyright 2026 The tlm Authors
// Licensed under the Apache License, Version 2.0

#include "tlm/evaluator.hpp"

#include <cctype>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace tlm {

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> words;
  size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) words.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return words;
}

namespace {

struct Cell {
  int32_t s = 0, i = 0, d = 0;
  int64_t edits() const { return s + i + d; }
  int64_t insdel() const { return i + d; }
  // Minimal edits first; among those, fewest insertions+deletions.
  bool better_than(const Cell& o) const {
    if (edits() != o.edits()) return edits() < o.edits();
    return insdel() < o.insdel();
  }
};

}  // namespace

WerBreakdown wer(const std::vector<std::string>& reference,
                 const std::vector<std::string>& hypothesis) {
  if (reference.empty()) {
    throw std::invalid_argument("wer: empty reference");
  }
  const size_t nr = reference.size();
  const size_t nh = hypothesis.size();
  std::vector<Cell> prev(nh + 1), cur(nh + 1);
  for (size_t j = 1; j <= nh; ++j) {
    prev[j] = prev[j - 1];
    prev[j].i += 1;
  }
  for (size_t i = 1; i <= nr; ++i) {
    cur[0] = prev[0];
    cur[0].d += 1;
    for (size_t j = 1; j <= nh; ++j) {
      Cell diag = prev[j - 1];
      if (reference[i - 1] != hypothesis[j - 1]) diag.s += 1;
      Cell del = prev[j];
      del.d += 1;
      Cell ins = cur[j - 1];
      ins.i += 1;
      Cell best = diag;
      if (del.better_than(best)) best = del;
      if (ins.better_than(best)) best = ins;
      cur[j] = best;
    }
    std::swap(prev, cur);
  }
  WerBreakdown out;
  out.substitutions = prev[nh].s;
  out.insertions = prev[nh].i;
  out.deletions = prev[nh].d;
  out.reference_words = static_cast<int64_t>(nr);
  return out;
}

WerBreakdown wer(std::string_view reference, std::string_view hypothesis) {
  return wer(split_whitespace(reference), split_whitespace(hypothesis));
}

WerBreakdown corpus_wer(
    const std::vector<std::pair<std::string, std::string>>& ref_hyp_pairs) {
  if (ref_hyp_pairs.empty()) {
    throw std::invalid_argument("corpus_wer: no utterances");
  }
  WerBreakdown total;
  for (const auto& [ref, hyp] : ref_hyp_pairs) {
    const WerBreakdown w = wer(ref, hyp);
    total.substitutions += w.substitutions;
    total.insertions += w.insertions;
    total.deletions += w.deletions;
    total.reference_words += w.reference_words;
  }
  return total;
}

double werr(double baseline_wer, double system_wer) {
  if (baseline_wer <= 0.0) {
    throw std::invalid_argument("werr: baseline WER must be positive, got " +
                                std::to_string(baseline_wer));
  }
  return 100.0 * (baseline_wer - system_wer) / baseline_wer;
}

std::string format_param_count(int64_t params) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1)
     << static_cast<double>(params) / 1e6 << "M";
  return os.str();
}

std::string format_results_table(const std::vector<ResultRow>& rows) {
  size_t w0 = 8;
  for (const auto& r : rows) w0 = std::max(w0, r.approach.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(w0 + 2)) << "Approach"
     << std::setw(8) << "#BPE" << std::setw(10) << "#Param"
     << std::setw(8) << "WER" << "WERR\n";
  for (const auto& r : rows) {
    os << std::left << std::setw(static_cast<int>(w0 + 2)) << r.approach
       << std::setw(8) << r.bpe << std::setw(10) << r.params << std::fixed
       << std::setprecision(2) << std::setw(8) << r.wer;
    if (r.has_werr) {
      os << std::fixed << std::setprecision(2) << r.werr << "%";
    } else {
      os << "-";
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace tlm
