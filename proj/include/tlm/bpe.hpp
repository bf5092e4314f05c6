// Copyright 2026 The tlm Authors
// Licensed under the Apache License, Version 2.0
//
// Byte-pair-encoding subword tokenizer. Operates on Unicode scalar values
// with an end-of-word marker fused onto word-final units; training greedily
// merges the most frequent adjacent pair, breaking ties toward the pair
// whose first occurrence comes earliest in corpus scan order.

#ifndef TLM_BPE_HPP_
#define TLM_BPE_HPP_

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace tlm {

inline constexpr char kWordMarker[] = "</w>";

struct MergeTable {
  std::vector<std::pair<std::string, std::string>> merges;  // rank order
  std::unordered_map<std::string, int32_t> rank;            // key(left,right) -> index

  static std::string key(std::string_view left, std::string_view right) {
    std::string k(left);
    k.push_back('\x01');
    k.append(right);
    return k;
  }
  // -1 when the pair is not a learned merge.
  int32_t rank_of(std::string_view left, std::string_view right) const {
    auto it = rank.find(key(left, right));
    return it == rank.end() ? -1 : it->second;
  }
};

struct Vocabulary {
  static constexpr int64_t kBosId = 0;
  static constexpr int64_t kEosId = 1;
  static constexpr int64_t kUnkId = 2;
  static constexpr int64_t kPadId = 3;
  static constexpr int64_t kNumSpecials = 4;

  // Dense ids: specials at 0..3, then subword units sorted by descending
  // training-corpus frequency (the order the adaptive softmax cutoffs
  // index into).
  std::vector<std::string> units;
  std::unordered_map<std::string, int64_t> id;
  std::vector<int64_t> frequency;

  int64_t size() const { return static_cast<int64_t>(units.size()); }
  int64_t id_of(const std::string& unit) const {
    auto it = id.find(unit);
    return it == id.end() ? kUnkId : it->second;
  }
  static bool is_special(int64_t i) { return i >= 0 && i < kNumSpecials; }
};

struct BpeModel {
  MergeTable merges;
  Vocabulary vocab;
  std::string warning;  // non-empty when target_size was unreachable
};

// Learns merges until the vocabulary reaches target_size or no adjacent
// pair occurs at least twice (which sets a warning, not an error).
BpeModel train_bpe(const std::string& corpus_text, int64_t target_size,
                   bool lowercase = false);

// Applies merges in rank order within each whitespace-delimited word; units
// missing from the vocabulary map to the unknown token.
std::vector<int64_t> encode(std::string_view text, const MergeTable& merges,
                            const Vocabulary& vocab, bool lowercase = false);

// Concatenates units, turning end-of-word markers back into spaces;
// special tokens are dropped. Throws on out-of-range ids.
std::string decode(const std::vector<int64_t>& ids, const Vocabulary& vocab);

// One merge per line, "left right", in rank order.
void save_merges(const std::string& path, const MergeTable& merges);
MergeTable load_merges(const std::string& path);

// One "unit<TAB>frequency" per line, in id order, specials first.
void save_vocab(const std::string& path, const Vocabulary& vocab);
Vocabulary load_vocab(const std::string& path);

// Splits text into Unicode scalar-value substrings (UTF-8); an invalid
// byte stands alone.
std::vector<std::string> utf8_chars(std::string_view text);

}  // namespace tlm

#endif  // TLM_BPE_HPP_
