// Copyright 2026 The tlm Authors
// Licensed under the Apache License, Version 2.0

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>

#include "tlm/bpe.hpp"
#include "tlm/rng.hpp"
#include "tlm/synthetic.hpp"

using namespace tlm;

namespace {

// Brute-force adjacent-pair counter over the initial character
// symbolization, independent of the trainer's incremental statistics.
std::map<std::pair<std::string, std::string>, int64_t> brute_pair_counts(
    const std::string& corpus) {
  std::map<std::pair<std::string, std::string>, int64_t> counts;
  std::string word;
  std::istringstream is(corpus);
  while (is >> word) {
    std::vector<std::string> syms = utf8_chars(word);
    syms.back() += kWordMarker;
    for (size_t i = 0; i + 1 < syms.size(); ++i) {
      counts[{syms[i], syms[i + 1]}] += 1;
    }
  }
  return counts;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("first merge is the most frequent adjacent pair") {
  const std::string corpus = "aaab aaab aaab";
  const auto counts = brute_pair_counts(corpus);
  // oracle says ("a","a") leads with 6 (two overlapping occurrences per word)
  CHECK(counts.at({"a", "a"}) == 6);
  CHECK(counts.at({"a", "b</w>"}) == 3);

  const BpeModel model = train_bpe(corpus, 10);
  REQUIRE(!model.merges.merges.empty());
  CHECK(model.merges.merges[0] == std::pair<std::string, std::string>{"a", "a"});
}

TEST_CASE("fully distinct single characters yield zero merges") {
  const BpeModel model = train_bpe("a b c d e", 100);
  CHECK(model.merges.merges.empty());
  CHECK(model.vocab.size() == Vocabulary::kNumSpecials + 5);
  for (const char* unit : {"a</w>", "b</w>", "c</w>", "d</w>", "e</w>"}) {
    CHECK(model.vocab.id.count(unit) == 1);
  }
  CHECK(!model.warning.empty());  // target 100 is unreachable
}

TEST_CASE("equal-count pairs break ties toward the earliest corpus occurrence") {
  // ("c","d</w>") and ("a","b</w>") both occur twice; "cd" words come first
  const BpeModel model = train_bpe("cd ab cd ab", 11);
  REQUIRE(!model.merges.merges.empty());
  CHECK(model.merges.merges[0] == std::pair<std::string, std::string>{"c", "d</w>"});
}

TEST_CASE("a word merged into a single learned unit encodes to one id") {
  const BpeModel model = train_bpe("aaab aaab aaab", 12);
  const auto ids = encode("aaab", model.merges, model.vocab);
  REQUIRE(ids.size() == 1);
  CHECK(model.vocab.units[static_cast<size_t>(ids[0])] == "aaab</w>");
  CHECK(decode(ids, model.vocab) == "aaab");
}

TEST_CASE("encode and decode edge cases") {
  const BpeModel model = train_bpe("hello world hello", 30);
  CHECK(encode("", model.merges, model.vocab).empty());
  CHECK(encode("   ", model.merges, model.vocab).empty());
  CHECK(decode({}, model.vocab).empty());
  CHECK(decode({Vocabulary::kBosId, Vocabulary::kEosId, Vocabulary::kPadId},
               model.vocab) == "");
  // unknown characters degrade to the unknown token
  const auto ids = encode("z", model.merges, model.vocab);
  REQUIRE(ids.size() == 1);
  CHECK(ids[0] == Vocabulary::kUnkId);
  CHECK_THROWS_AS(decode({model.vocab.size()}, model.vocab), std::out_of_range);
}

TEST_CASE("round trip is lossless for known-character text") {
  const std::string corpus = "the cat sat on the mat the cat ran";
  const BpeModel model = train_bpe(corpus, 40);
  std::istringstream is(corpus);
  std::string word;
  while (is >> word) {
    CHECK(decode(encode(word, model.merges, model.vocab), model.vocab) == word);
  }
  CHECK(decode(encode("the cat sat", model.merges, model.vocab), model.vocab) ==
        "the cat sat");
}

TEST_CASE("round trip over a generated thousand-line sample") {
  SyntheticSourceParams sp;
  sp.vocab_size = 30;
  sp.seed = 9;
  const SyntheticSource source = SyntheticSource::make(sp);
  Rng rng(10);
  const auto lines = source.generate_corpus(rng, 1000, 8);
  std::string corpus;
  for (const auto& l : lines) corpus += l + "\n";
  const BpeModel model = train_bpe(corpus, 220);
  for (size_t i = 0; i < lines.size(); i += 37) {
    CHECK(decode(encode(lines[i], model.merges, model.vocab), model.vocab) == lines[i]);
  }
}

TEST_CASE("unicode text is handled at scalar-value granularity") {
  const BpeModel model = train_bpe("héllo héllo wörld", 30);
  CHECK(decode(encode("héllo wörld", model.merges, model.vocab), model.vocab) ==
        "héllo wörld");
}

TEST_CASE("vocabulary size never exceeds the target") {
  const std::string corpus = "the cat sat on the mat the cat ran fast today";
  for (int64_t target : {19, 20, 25, 30, 60}) {
    const BpeModel model = train_bpe(corpus, target);
    CHECK(model.vocab.size() <= target);
  }
}

TEST_CASE("smaller vocabularies are merge-list prefixes of larger ones") {
  const std::string corpus =
      "the cat sat on the mat the cat ran fast the dog sat on a log";
  const BpeModel small = train_bpe(corpus, 24);
  const BpeModel big = train_bpe(corpus, 36);
  REQUIRE(small.merges.merges.size() <= big.merges.merges.size());
  for (size_t i = 0; i < small.merges.merges.size(); ++i) {
    CHECK(small.merges.merges[i] == big.merges.merges[i]);
  }
}

TEST_CASE("frequencies sum to the encoded corpus token count") {
  const std::string corpus = "spark spear spore spark spoon spear spark";
  const BpeModel model = train_bpe(corpus, 26);
  int64_t freq_sum = 0;
  for (int64_t f : model.vocab.frequency) freq_sum += f;
  int64_t encoded = 0;
  std::istringstream is(corpus);
  std::string word;
  while (is >> word) {
    encoded += static_cast<int64_t>(encode(word, model.merges, model.vocab).size());
  }
  CHECK(freq_sum == encoded);
  // ids beyond the specials are ordered by descending frequency
  for (int64_t i = Vocabulary::kNumSpecials; i + 1 < model.vocab.size(); ++i) {
    CHECK(model.vocab.frequency[static_cast<size_t>(i)] >=
          model.vocab.frequency[static_cast<size_t>(i + 1)]);
  }
}

TEST_CASE("training is deterministic") {
  const std::string corpus = "mississippi missouri mission mississippi mission";
  const BpeModel a = train_bpe(corpus, 30);
  const BpeModel b = train_bpe(corpus, 30);
  CHECK(a.merges.merges == b.merges.merges);
  CHECK(a.vocab.units == b.vocab.units);
  CHECK(a.vocab.frequency == b.vocab.frequency);
}

TEST_CASE("training errors and warnings") {
  CHECK_THROWS_WITH_AS(train_bpe("", 100), doctest::Contains("no words"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(train_bpe("   \n\t ", 100), doctest::Contains("no words"),
                       std::invalid_argument);
  CHECK_THROWS_AS(train_bpe("abc abc", 4), std::invalid_argument);
  const BpeModel model = train_bpe("q w e r t y", 50);
  CHECK(!model.warning.empty());
}

TEST_CASE("lowercase flag folds ASCII case at train and encode time") {
  const BpeModel model = train_bpe("Hello HELLO hello", 20, /*lowercase=*/true);
  const auto a = encode("HeLLo", model.merges, model.vocab, true);
  const auto b = encode("hello", model.merges, model.vocab, true);
  CHECK(a == b);
}

TEST_CASE("merge and vocab files round-trip") {
  const BpeModel model = train_bpe("banana bandana banana cabana", 30);
  const std::string mpath = temp_path("tlm_test.merges");
  const std::string vpath = temp_path("tlm_test.vocab");
  save_merges(mpath, model.merges);
  save_vocab(vpath, model.vocab);

  const MergeTable merges = load_merges(mpath);
  const Vocabulary vocab = load_vocab(vpath);
  CHECK(merges.merges == model.merges.merges);
  CHECK(vocab.units == model.vocab.units);
  CHECK(vocab.frequency == model.vocab.frequency);
  CHECK(encode("banana", merges, vocab) == encode("banana", model.merges, model.vocab));

  // vocab files must begin with the special tokens
  std::ofstream bad(vpath, std::ios::binary);
  bad << "oops\t1\n";
  bad.close();
  CHECK_THROWS_AS(load_vocab(vpath), std::runtime_error);
  std::filesystem::remove(mpath);
  std::filesystem::remove(vpath);
}
