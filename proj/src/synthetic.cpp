// Copyright 2026 The tlm Authors
// Licensed under the Apache License, Version 2.0

#include "tlm/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "tlm/evaluator.hpp"

namespace tlm {
namespace {

std::string word_name(int64_t i, int64_t vocab) {
  int width = 1;
  for (int64_t v = vocab - 1; v >= 10; v /= 10) ++width;
  std::ostringstream os;
  os << 'w';
  std::string digits = std::to_string(i);
  os << std::string(static_cast<size_t>(width) - digits.size(), '0') << digits;
  return os.str();
}

int64_t sample_categorical(const double* p, int64_t n, Rng& rng) {
  double u = rng.uniform();
  for (int64_t i = 0; i < n; ++i) {
    u -= p[i];
    if (u < 0.0) return i;
  }
  return n - 1;
}

int64_t ipow(int64_t base, int exp) {
  int64_t r = 1;
  for (int i = 0; i < exp; ++i) r *= base;
  return r;
}

}  // namespace

SyntheticSource SyntheticSource::make(const SyntheticSourceParams& params) {
  if (params.order < 1 || params.order > 3) {
    throw std::invalid_argument("synthetic source: order must be 1..3");
  }
  if (params.vocab_size < 2) {
    throw std::invalid_argument("synthetic source: vocab_size must be >= 2");
  }
  if (params.smoothing <= 0.0 || params.smoothing >= 1.0) {
    throw std::invalid_argument("synthetic source: smoothing must be in (0,1)");
  }
  const int64_t branching = std::min<int64_t>(std::max<int64_t>(params.branching, 1),
                                              params.vocab_size);
  SyntheticSource s;
  s.params_ = params;
  s.params_.branching = branching;
  for (int64_t i = 0; i < params.vocab_size; ++i) {
    s.words_.push_back(word_name(i, params.vocab_size));
  }
  s.num_histories_ = ipow(params.vocab_size, params.order);
  s.table_.assign(static_cast<size_t>(s.num_histories_ * params.vocab_size), 0.0);

  Rng rng = Rng::derive(params.seed, "synthetic_table");
  const double uniform_mass = params.smoothing / static_cast<double>(params.vocab_size);

  // Each word owns a successor set; the history only reweights within that
  // set. Lower-order statistics are then informative on their own, so a
  // learner climbs from unigram to bigram to the full order smoothly, while
  // sharp per-history weights keep the true conditional entropy well below
  // the bigram approximation.
  std::vector<std::vector<int64_t>> successors(static_cast<size_t>(params.vocab_size));
  for (auto& set : successors) {
    while (static_cast<int64_t>(set.size()) < branching) {
      const int64_t w = static_cast<int64_t>(rng.uniform_int(params.vocab_size));
      if (std::find(set.begin(), set.end(), w) == set.end()) set.push_back(w);
    }
  }
  for (int64_t h = 0; h < s.num_histories_; ++h) {
    double* row = s.table_.data() + h * params.vocab_size;
    const int64_t current = h % params.vocab_size;  // most recent word
    const auto& set = successors[static_cast<size_t>(current)];
    double total = 0.0;
    std::vector<double> weight(set.size());
    for (auto& wgt : weight) {
      const double u = 0.2 + rng.uniform();
      wgt = u * u * u;  // sharp: most histories have one dominant successor
      total += wgt;
    }
    for (int64_t w = 0; w < params.vocab_size; ++w) row[w] = uniform_mass;
    for (size_t i = 0; i < set.size(); ++i) {
      row[set[i]] += (1.0 - params.smoothing) * weight[i] / total;
    }
  }
  s.finalize();
  return s;
}

void SyntheticSource::finalize() {
  const int64_t v = params_.vocab_size;
  // exact row normalization
  for (int64_t h = 0; h < num_histories_; ++h) {
    double* row = table_.data() + h * v;
    double sum = 0.0;
    for (int64_t w = 0; w < v; ++w) sum += row[w];
    for (int64_t w = 0; w < v; ++w) row[w] /= sum;
  }
  // stationary distribution over histories by power iteration; smoothing
  // makes the chain irreducible and aperiodic, so this converges
  stationary_.assign(static_cast<size_t>(num_histories_), 1.0 / static_cast<double>(num_histories_));
  std::vector<double> next(stationary_.size());
  const int64_t tail = num_histories_ / v;  // drop the oldest word: h % tail
  for (int iter = 0; iter < 20000; ++iter) {
    std::fill(next.begin(), next.end(), 0.0);
    for (int64_t h = 0; h < num_histories_; ++h) {
      const double mass = stationary_[static_cast<size_t>(h)];
      if (mass == 0.0) continue;
      const double* row = table_.data() + h * v;
      const int64_t base = (h % tail) * v;
      for (int64_t w = 0; w < v; ++w) next[static_cast<size_t>(base + w)] += mass * row[w];
    }
    double delta = 0.0;
    for (size_t i = 0; i < next.size(); ++i) delta += std::abs(next[i] - stationary_[i]);
    stationary_.swap(next);
    if (delta < 1e-14) break;
  }
}

double SyntheticSource::entropy_rate() const {
  const int64_t v = params_.vocab_size;
  double h_rate = 0.0;
  for (int64_t h = 0; h < num_histories_; ++h) {
    const double pi = stationary_[static_cast<size_t>(h)];
    if (pi == 0.0) continue;
    const double* row = table_.data() + h * v;
    double hh = 0.0;
    for (int64_t w = 0; w < v; ++w) {
      if (row[w] > 0.0) hh -= row[w] * std::log(row[w]);
    }
    h_rate += pi * hh;
  }
  return h_rate;
}

double SyntheticSource::analytic_token_ppl(int64_t words_per_line) const {
  if (words_per_line < params_.order) {
    throw std::invalid_argument("analytic_token_ppl: line shorter than the order");
  }
  double joint = 0.0;  // entropy of the stationary history (the first k words)
  for (double pi : stationary_) {
    if (pi > 0.0) joint -= pi * std::log(pi);
  }
  const double total =
      joint + static_cast<double>(words_per_line - params_.order) * entropy_rate();
  // predicted tokens: every word plus the EOS, which costs nothing at a
  // deterministic line length
  return std::exp(total / static_cast<double>(words_per_line + 1));
}

std::string SyntheticSource::sample_line(Rng& rng, int64_t words_per_line) const {
  if (words_per_line < params_.order) {
    throw std::invalid_argument("sample_line: need at least `order` words per line");
  }
  const int64_t v = params_.vocab_size;
  int64_t history = sample_categorical(stationary_.data(), num_histories_, rng);
  // unpack the initial history (most recent word is the low digit)
  std::vector<int64_t> out;
  {
    std::vector<int64_t> hist_words(static_cast<size_t>(params_.order));
    int64_t h = history;
    for (int i = params_.order - 1; i >= 0; --i) {
      hist_words[static_cast<size_t>(i)] = h % v;
      h /= v;
    }
    out = hist_words;
  }
  const int64_t tail = num_histories_ / v;
  while (static_cast<int64_t>(out.size()) < words_per_line) {
    const int64_t w = sample_categorical(row(history), v, rng);
    out.push_back(w);
    history = (history % tail) * v + w;
  }
  std::string line;
  for (size_t i = 0; i < out.size(); ++i) {
    if (i) line.push_back(' ');
    line += words_[static_cast<size_t>(out[i])];
  }
  return line;
}

std::vector<std::string> SyntheticSource::generate_corpus(Rng& rng, int64_t lines,
                                                          int64_t words_per_line) const {
  std::vector<std::string> out;
  out.reserve(static_cast<size_t>(lines));
  for (int64_t i = 0; i < lines; ++i) out.push_back(sample_line(rng, words_per_line));
  return out;
}

std::string SyntheticSource::to_json() const {
  nlohmann::json j;
  j["order"] = params_.order;
  j["vocab_size"] = params_.vocab_size;
  j["branching"] = params_.branching;
  j["smoothing"] = params_.smoothing;
  j["seed"] = params_.seed;
  j["table"] = table_;
  return j.dump();
}

SyntheticSource SyntheticSource::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  SyntheticSource s;
  s.params_.order = j.at("order").get<int>();
  s.params_.vocab_size = j.at("vocab_size").get<int64_t>();
  s.params_.branching = j.at("branching").get<int64_t>();
  s.params_.smoothing = j.at("smoothing").get<double>();
  s.params_.seed = j.at("seed").get<uint64_t>();
  for (int64_t i = 0; i < s.params_.vocab_size; ++i) {
    s.words_.push_back(word_name(i, s.params_.vocab_size));
  }
  s.num_histories_ = ipow(s.params_.vocab_size, s.params_.order);
  s.table_ = j.at("table").get<std::vector<double>>();
  if (static_cast<int64_t>(s.table_.size()) != s.num_histories_ * s.params_.vocab_size) {
    throw std::runtime_error("synthetic source: table size does not match order/vocab");
  }
  s.finalize();
  return s;
}

void BigramLm::train(const std::vector<std::string>& lines, double add_k) {
  add_k_ = add_k;
  word_id_.clear();
  unigram_.clear();
  bigram_.clear();
  auto intern = [this](const std::string& w) {
    auto it = word_id_.find(w);
    if (it != word_id_.end()) return it->second;
    const int64_t id = static_cast<int64_t>(word_id_.size());
    word_id_.emplace(w, id);
    return id;
  };
  constexpr int64_t kBos = -1, kEos = -2;
  for (const auto& line : lines) {
    int64_t prev = kBos;
    for (const auto& w : split_whitespace(line)) {
      const int64_t id = intern(w);
      unigram_[prev] += 1;
      bigram_[prev * 1000003 + id] += 1;
      prev = id;
    }
    unigram_[prev] += 1;
    bigram_[prev * 1000003 + kEos] += 1;
  }
  vocab_ = static_cast<int64_t>(word_id_.size()) + 2;  // words + EOS + unseen
}

int64_t BigramLm::id_or_unk(const std::string& w) const {
  auto it = word_id_.find(w);
  return it == word_id_.end() ? -3 : it->second;
}

double BigramLm::log_prob(const std::string& sentence) const {
  constexpr int64_t kBos = -1, kEos = -2;
  double lp = 0.0;
  int64_t prev = kBos;
  auto step = [&](int64_t id) {
    const auto ctx = unigram_.find(prev);
    const double ctx_count = ctx == unigram_.end() ? 0.0 : static_cast<double>(ctx->second);
    const auto big = bigram_.find(prev * 1000003 + id);
    const double big_count = big == bigram_.end() ? 0.0 : static_cast<double>(big->second);
    lp += std::log((big_count + add_k_) /
                   (ctx_count + add_k_ * static_cast<double>(vocab_)));
    prev = id;
  };
  for (const auto& w : split_whitespace(sentence)) step(id_or_unk(w));
  step(kEos);
  return lp;
}

std::vector<NBestRecord> synth_nbest(const SyntheticSource& source,
                                     const BigramLm& ngram,
                                     const SynthNbestParams& params, int64_t utterances,
                                     int64_t words_per_line) {
  if (params.n < 1) throw std::invalid_argument("synth_nbest: n must be >= 1");
  for (double rate : {params.sub_rate, params.ins_rate, params.del_rate}) {
    if (rate < 0.0 || rate > 1.0) {
      throw std::invalid_argument("synth_nbest: corruption rates must be in [0,1]");
    }
  }
  Rng rng = Rng::derive(params.seed, "synth_nbest");
  const auto& words = source.words();
  auto random_word = [&]() {
    return words[rng.uniform_int(static_cast<uint64_t>(words.size()))];
  };

  auto corrupt = [&](const std::vector<std::string>& ref_words) {
    std::vector<std::string> out;
    for (const auto& w : ref_words) {
      if (rng.uniform() < params.del_rate) continue;
      if (rng.uniform() < params.sub_rate) {
        out.push_back(random_word());
      } else {
        out.push_back(w);
      }
      if (rng.uniform() < params.ins_rate) out.push_back(random_word());
    }
    if (out.empty()) out.push_back(random_word());
    std::string joined;
    for (size_t i = 0; i < out.size(); ++i) {
      if (i) joined.push_back(' ');
      joined += out[i];
    }
    return joined;
  };

  std::vector<NBestRecord> records;
  for (int64_t u = 0; u < utterances; ++u) {
    NBestRecord r;
    r.utterance_id = "utt-" + std::to_string(u);
    const std::string ref = source.sample_line(rng, words_per_line);
    r.reference = ref;
    const auto ref_words = split_whitespace(ref);

    std::vector<Candidate> cands;
    for (int64_t i = 0; i < params.n; ++i) {
      Candidate c;
      c.text = (i == 0) ? ref : corrupt(ref_words);
      const auto w = wer(ref, c.text);
      c.am_score = -params.am_edit_weight * static_cast<double>(w.errors()) +
                   params.am_noise * rng.normal();
      c.ngram_score = ngram.log_prob(c.text);
      cands.push_back(std::move(c));
    }
    // first-pass rank: descending am + ngram (stable, so exact ties keep
    // generation order)
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      return a.am_score + a.ngram_score > b.am_score + b.ngram_score;
    });
    r.candidates = std::move(cands);
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace tlm
