// Copyright 2026 The tlm Authors
// Licensed under the Apache License, Version 2.0

#include <doctest.h>

#include <cmath>

#include "tlm/evaluator.hpp"
#include "tlm/synthetic.hpp"

using namespace tlm;

namespace {

SyntheticSource small_source(uint64_t seed = 5) {
  SyntheticSourceParams p;
  p.order = 2;
  p.vocab_size = 12;
  p.branching = 4;
  p.smoothing = 0.08;
  p.seed = seed;
  return SyntheticSource::make(p);
}

}  // namespace

TEST_CASE("every history distribution sums to one") {
  const SyntheticSource s = small_source();
  for (int64_t h = 0; h < s.num_histories(); ++h) {
    double sum = 0.0;
    for (int64_t w = 0; w < s.vocab_size(); ++w) sum += s.row(h)[w];
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("the stationary distribution is a fixed point of the history chain") {
  const SyntheticSource s = small_source();
  const auto& pi = s.stationary();
  std::vector<double> next(pi.size(), 0.0);
  const int64_t v = s.vocab_size();
  const int64_t tail = s.num_histories() / v;
  for (int64_t h = 0; h < s.num_histories(); ++h) {
    for (int64_t w = 0; w < v; ++w) {
      next[static_cast<size_t>((h % tail) * v + w)] += pi[static_cast<size_t>(h)] * s.row(h)[w];
    }
  }
  double residual = 0.0, total = 0.0;
  for (size_t i = 0; i < pi.size(); ++i) {
    residual += std::abs(next[i] - pi[i]);
    total += pi[i];
  }
  CHECK(residual < 1e-10);
  CHECK(std::abs(total - 1.0) < 1e-10);
}

TEST_CASE("entropy rate and analytic perplexity are in sane ranges") {
  const SyntheticSource s = small_source();
  const double rate = s.entropy_rate();
  CHECK(rate > 0.0);
  CHECK(rate < std::log(static_cast<double>(s.vocab_size())));
  const double ppl = s.analytic_token_ppl(32);
  CHECK(ppl > 1.0);
  CHECK(ppl < static_cast<double>(s.vocab_size()));
  // longer lines amortize the expensive first words toward the rate
  CHECK(s.analytic_token_ppl(64) < s.analytic_token_ppl(8) + 1.0);
  CHECK_THROWS_AS(s.analytic_token_ppl(1), std::invalid_argument);
}

TEST_CASE("corpus generation is deterministic and well-formed") {
  const SyntheticSource s = small_source();
  Rng r1(7), r2(7);
  const auto a = s.generate_corpus(r1, 50, 10);
  const auto b = s.generate_corpus(r2, 50, 10);
  CHECK(a == b);
  for (const auto& line : a) {
    const auto words = split_whitespace(line);
    CHECK(words.size() == 10);
    for (const auto& w : words) {
      CHECK(std::find(s.words().begin(), s.words().end(), w) != s.words().end());
    }
  }
  Rng r3(8);
  CHECK(s.generate_corpus(r3, 5, 10) != std::vector<std::string>(a.begin(), a.begin() + 5));
}

TEST_CASE("source JSON round-trip preserves behavior") {
  const SyntheticSource s = small_source(11);
  const SyntheticSource t = SyntheticSource::from_json(s.to_json());
  CHECK(t.vocab_size() == s.vocab_size());
  CHECK(t.entropy_rate() == doctest::Approx(s.entropy_rate()).epsilon(1e-12));
  Rng r1(3), r2(3);
  CHECK(s.generate_corpus(r1, 10, 8) == t.generate_corpus(r2, 10, 8));
}

TEST_CASE("bigram LM prefers in-domain sentences over gibberish") {
  const SyntheticSource s = small_source();
  Rng rng(13);
  const auto lines = s.generate_corpus(rng, 200, 10);
  BigramLm lm;
  lm.train(lines);
  const double seen = lm.log_prob(lines[0]);
  const double gibberish = lm.log_prob("zz yy xx ww vv uu tt ss rr qq");
  CHECK(std::isfinite(seen));
  CHECK(std::isfinite(gibberish));
  CHECK(seen > gibberish);
}

TEST_CASE("zero corruption yields candidates identical to the reference") {
  const SyntheticSource s = small_source();
  Rng rng(17);
  BigramLm lm;
  lm.train(s.generate_corpus(rng, 50, 8));
  SynthNbestParams p;
  p.n = 5;
  p.sub_rate = p.ins_rate = p.del_rate = 0.0;
  p.seed = 19;
  const auto records = synth_nbest(s, lm, p, 6, 8);
  REQUIRE(records.size() == 6);
  for (const auto& r : records) {
    REQUIRE(r.reference.has_value());
    REQUIRE(r.candidates.size() == 5);
    for (const auto& c : r.candidates) CHECK(c.text == *r.reference);
  }
}

TEST_CASE("n = 1 keeps only the reference so rescoring cannot change WER") {
  const SyntheticSource s = small_source();
  Rng rng(23);
  BigramLm lm;
  lm.train(s.generate_corpus(rng, 50, 8));
  SynthNbestParams p;
  p.n = 1;
  p.seed = 29;
  const auto records = synth_nbest(s, lm, p, 4, 8);
  for (const auto& r : records) {
    REQUIRE(r.candidates.size() == 1);
    CHECK(r.candidates[0].text == *r.reference);
  }
}

TEST_CASE("oracle WER <= first-pass WER <= worst-candidate WER on every record") {
  const SyntheticSource s = small_source();
  Rng rng(31);
  BigramLm lm;
  lm.train(s.generate_corpus(rng, 100, 8));
  SynthNbestParams p;
  p.n = 12;
  p.sub_rate = 0.25;
  p.ins_rate = 0.08;
  p.del_rate = 0.08;
  p.seed = 37;
  const auto records = synth_nbest(s, lm, p, 25, 8);
  int64_t oracle_err = 0, first_err = 0, worst_err = 0, ref_words = 0;
  for (const auto& r : records) {
    int64_t best = 1 << 30, worst = -1;
    for (const auto& c : r.candidates) {
      const int64_t e = wer(*r.reference, c.text).errors();
      best = std::min(best, e);
      worst = std::max(worst, e);
    }
    // first-pass choice is index 0 by construction (sorted by am + ngram)
    const int64_t first = wer(*r.reference, r.candidates[0].text).errors();
    CHECK(best <= first);
    CHECK(first <= worst);
    oracle_err += best;
    first_err += first;
    worst_err += worst;
    ref_words += static_cast<int64_t>(split_whitespace(*r.reference).size());
  }
  CHECK(oracle_err <= first_err);
  CHECK(first_err <= worst_err);
  CHECK(ref_words == 25 * 8);

  // candidates really are ordered by descending first-pass score
  for (const auto& r : records) {
    for (size_t i = 0; i + 1 < r.candidates.size(); ++i) {
      CHECK(r.candidates[i].am_score + r.candidates[i].ngram_score >=
            r.candidates[i + 1].am_score + r.candidates[i + 1].ngram_score);
    }
  }
}

TEST_CASE("synth_nbest validates parameters") {
  const SyntheticSource s = small_source();
  BigramLm lm;
  Rng rng(1);
  lm.train(s.generate_corpus(rng, 10, 8));
  SynthNbestParams p;
  p.n = 0;
  CHECK_THROWS_AS(synth_nbest(s, lm, p, 1, 8), std::invalid_argument);
  p.n = 2;
  p.sub_rate = 1.5;
  CHECK_THROWS_AS(synth_nbest(s, lm, p, 1, 8), std::invalid_argument);
}
