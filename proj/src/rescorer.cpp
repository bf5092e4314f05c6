// Copyright 2026 The tlm Authors
// Licensed under the Apache License, Version 2.0

#include "tlm/rescorer.hpp"

#include <fstream>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

namespace tlm {

double combine(const Candidate& c, const RescoreWeights& weights) {
  validate_weights(weights);
  if (!c.nlm_score.has_value()) {
    throw std::invalid_argument("combine: candidate '" + c.text +
                                "' has no neural LM score");
  }
  double s = c.am_score;
  if (weights.alpha > 0.0) s += weights.alpha * c.ngram_score;
  if (weights.alpha < 1.0) s += (1.0 - weights.alpha) * *c.nlm_score;
  return s;
}

size_t select_top(const NBestRecord& record, const RescoreWeights& weights) {
  if (record.candidates.empty()) {
    throw std::invalid_argument("select_top: utterance '" + record.utterance_id +
                                "' has no candidates");
  }
  size_t best = 0;
  double best_score = combine(record.candidates[0], weights);
  for (size_t i = 1; i < record.candidates.size(); ++i) {
    const double s = combine(record.candidates[i], weights);
    if (s > best_score) {
      best = i;
      best_score = s;
    }
  }
  return best;
}

std::vector<double> default_alpha_grid(double step) {
  if (step <= 0.0 || step > 1.0) {
    throw std::invalid_argument("alpha grid: step must be in (0,1]");
  }
  std::vector<double> grid;
  for (double a = 0.0; a < 1.0 - 1e-12; a += step) grid.push_back(a);
  grid.push_back(1.0);
  return grid;
}

AlphaTuneResult tune_alpha(const std::vector<NBestRecord>& dev_records,
                           const std::vector<double>& grid) {
  if (dev_records.empty()) throw std::invalid_argument("tune_alpha: no records");
  if (grid.empty()) throw std::invalid_argument("tune_alpha: empty grid");
  for (const auto& r : dev_records) {
    if (!r.reference.has_value()) {
      throw std::invalid_argument("tune_alpha: utterance '" + r.utterance_id +
                                  "' has no reference transcript");
    }
  }
  std::vector<double> sorted = grid;
  std::sort(sorted.begin(), sorted.end());
  AlphaTuneResult result;
  bool first = true;
  for (double alpha : sorted) {
    RescoreWeights w{alpha};
    validate_weights(w);
    std::vector<std::pair<std::string, std::string>> pairs;
    pairs.reserve(dev_records.size());
    for (const auto& r : dev_records) {
      if (r.candidates.empty()) continue;
      pairs.emplace_back(*r.reference, r.candidates[select_top(r, w)].text);
    }
    const double wer_pct = corpus_wer(pairs).wer();
    result.curve.emplace_back(alpha, wer_pct);
    // <= prefers the larger alpha on ties (grid is ascending)
    if (first || wer_pct <= result.best_wer) {
      result.best_wer = wer_pct;
      result.best_alpha = alpha;
      first = false;
    }
  }
  return result;
}

std::vector<NBestRecord> load_nbest(const std::string& path, bool scores_are_costs,
                                    int64_t n_max) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_nbest: cannot open " + path);
  std::vector<NBestRecord> records;
  std::unordered_set<std::string> seen_ids;
  std::string line;
  size_t line_no = 0;
  const double sign = scores_are_costs ? -1.0 : 1.0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("load_nbest: " + path + ":" + std::to_string(line_no) +
                               ": " + e.what());
    }
    NBestRecord r;
    r.utterance_id = j.at("utt_id").get<std::string>();
    if (!seen_ids.insert(r.utterance_id).second) {
      throw std::runtime_error("load_nbest: duplicate utterance id '" +
                               r.utterance_id + "' at line " + std::to_string(line_no));
    }
    if (j.contains("ref") && !j.at("ref").is_null()) {
      r.reference = j.at("ref").get<std::string>();
    }
    for (const auto& h : j.at("hyps")) {
      Candidate c;
      c.text = h.at("text").get<std::string>();
      c.am_score = sign * h.at("am").get<double>();
      c.ngram_score = sign * h.at("ngram").get<double>();
      if (h.contains("nlm")) {
        if (h.at("nlm").is_null()) {
          c.nlm_score = -std::numeric_limits<double>::infinity();
          c.nlm_failed = true;
        } else {
          c.nlm_score = h.at("nlm").get<double>();
        }
      }
      r.candidates.push_back(std::move(c));
      if (static_cast<int64_t>(r.candidates.size()) > n_max) {
        throw std::runtime_error("load_nbest: utterance '" + r.utterance_id +
                                 "' exceeds the n-best limit of " + std::to_string(n_max));
      }
    }
    records.push_back(std::move(r));
  }
  return records;
}

void save_nbest(const std::string& path, const std::vector<NBestRecord>& records,
                const std::vector<size_t>* selected) {
  if (selected != nullptr && selected->size() != records.size()) {
    throw std::invalid_argument("save_nbest: " + std::to_string(selected->size()) +
                                " selections for " + std::to_string(records.size()) +
                                " records");
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_nbest: cannot open " + path);
  for (size_t i = 0; i < records.size(); ++i) {
    const NBestRecord& r = records[i];
    nlohmann::json j;
    j["utt_id"] = r.utterance_id;
    j["ref"] = r.reference.has_value() ? nlohmann::json(*r.reference) : nlohmann::json();
    nlohmann::json hyps = nlohmann::json::array();
    for (const auto& c : r.candidates) {
      nlohmann::json h{{"text", c.text}, {"am", c.am_score}, {"ngram", c.ngram_score}};
      if (c.nlm_score.has_value()) {
        h["nlm"] = std::isfinite(*c.nlm_score) ? nlohmann::json(*c.nlm_score)
                                               : nlohmann::json();
      }
      hyps.push_back(std::move(h));
    }
    j["hyps"] = std::move(hyps);
    if (selected != nullptr) j["selected"] = (*selected)[i];
    f << j.dump() << "\n";
  }
}

}  // namespace tlm
