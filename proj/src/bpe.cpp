// Copyright 2026 The tlm Authors
// Licensed under the Apache License, Version 2.0

#include "tlm/bpe.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace tlm {
namespace {

const char* const kSpecialUnits[] = {"<s>", "</s>", "<unk>", "<pad>"};

std::string lowercase_ascii(std::string_view text) {
  std::string out(text);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string> split_words(std::string_view text) {
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

// Initial symbolization: scalar-value characters with the end-of-word
// marker fused onto the final one.
std::vector<std::string> word_to_symbols(const std::string& word) {
  std::vector<std::string> syms = utf8_chars(word);
  syms.back() += kWordMarker;
  return syms;
}

// Interned-symbol trainer state. Pairs are packed into one 64-bit key.
using SymId = int32_t;

int64_t pack(SymId a, SymId b) {
  return (static_cast<int64_t>(a) << 32) | static_cast<uint32_t>(b);
}

struct Trainer {
  std::vector<std::string> sym_text;           // SymId -> string
  std::unordered_map<std::string, SymId> sym_id;
  std::vector<std::vector<SymId>> words;       // distinct words, corpus order
  std::vector<int64_t> word_freq;
  // pair -> total count; pair -> per-word occurrence counts (word ids
  // ascend in corpus order, so begin() is the earliest word).
  std::unordered_map<int64_t, int64_t> stats;
  std::unordered_map<int64_t, std::map<int32_t, int32_t>> where;

  SymId intern(const std::string& s) {
    auto it = sym_id.find(s);
    if (it != sym_id.end()) return it->second;
    SymId id = static_cast<SymId>(sym_text.size());
    sym_text.push_back(s);
    sym_id.emplace(s, id);
    return id;
  }

  void count_word(int32_t w, int64_t sign) {
    const auto& syms = words[static_cast<size_t>(w)];
    const int64_t f = word_freq[static_cast<size_t>(w)] * sign;
    for (size_t i = 0; i + 1 < syms.size(); ++i) {
      const int64_t p = pack(syms[i], syms[i + 1]);
      stats[p] += f;
      auto& occ = where[p];
      occ[w] += static_cast<int32_t>(sign);
      if (occ[w] == 0) occ.erase(w);
    }
  }

  int64_t first_pos(int32_t w, int64_t p) const {
    const auto& syms = words[static_cast<size_t>(w)];
    for (size_t i = 0; i + 1 < syms.size(); ++i) {
      if (pack(syms[i], syms[i + 1]) == p) return static_cast<int64_t>(i);
    }
    return static_cast<int64_t>(syms.size());
  }

  // Highest count wins; ties go to the pair first occurring earliest in
  // corpus scan order (earliest word, then earliest position).
  bool select(int64_t* best) const {
    bool found = false;
    int64_t best_count = 0;
    int32_t best_word = 0;
    int64_t best_pos = 0;
    for (const auto& [p, c] : stats) {
      if (c < 2) continue;
      const auto& occ = where.at(p);
      if (occ.empty()) continue;
      const int32_t w = occ.begin()->first;
      if (!found || c > best_count || (c == best_count && w < best_word)) {
        found = true;
        *best = p;
        best_count = c;
        best_word = w;
        best_pos = -1;  // lazily resolved
      } else if (c == best_count && w == best_word) {
        if (best_pos < 0) best_pos = first_pos(w, *best);
        const int64_t pos = first_pos(w, p);
        if (pos < best_pos) {
          *best = p;
          best_pos = pos;
        }
      }
    }
    return found;
  }

  void apply_merge(int64_t p, SymId merged) {
    const SymId left = static_cast<SymId>(p >> 32);
    const SymId right = static_cast<SymId>(static_cast<uint32_t>(p));
    // Snapshot: the merge edits `where` while we walk affected words.
    std::vector<int32_t> affected;
    for (const auto& [w, c] : where.at(p)) {
      if (c > 0) affected.push_back(w);
    }
    for (int32_t w : affected) {
      count_word(w, -1);
      auto& syms = words[static_cast<size_t>(w)];
      std::vector<SymId> merged_syms;
      merged_syms.reserve(syms.size());
      for (size_t i = 0; i < syms.size();) {
        if (i + 1 < syms.size() && syms[i] == left && syms[i + 1] == right) {
          merged_syms.push_back(merged);
          i += 2;
        } else {
          merged_syms.push_back(syms[i]);
          ++i;
        }
      }
      syms = std::move(merged_syms);
      count_word(w, +1);
    }
    stats.erase(p);
    where.erase(p);
  }
};

}  // namespace

std::vector<std::string> utf8_chars(std::string_view text) {
  std::vector<std::string> chars;
  size_t i = 0;
  while (i < text.size()) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    size_t len = 1;
    if (c >= 0xF0) {
      len = 4;
    } else if (c >= 0xE0) {
      len = 3;
    } else if (c >= 0xC0) {
      len = 2;
    }
    if (i + len > text.size()) len = 1;
    for (size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(text[i + k]) & 0xC0) != 0x80) {
        len = 1;  // malformed continuation: fall back to a single byte
        break;
      }
    }
    chars.emplace_back(text.substr(i, len));
    i += len;
  }
  return chars;
}

BpeModel train_bpe(const std::string& corpus_text, int64_t target_size,
                   bool lowercase) {
  const std::string text = lowercase ? lowercase_ascii(corpus_text) : corpus_text;
  const std::vector<std::string> tokens = split_words(text);
  if (tokens.empty()) {
    throw std::invalid_argument("train_bpe: corpus contains no words");
  }

  Trainer tr;
  std::unordered_map<std::string, int32_t> word_index;
  for (const std::string& w : tokens) {
    auto it = word_index.find(w);
    if (it == word_index.end()) {
      word_index.emplace(w, static_cast<int32_t>(tr.words.size()));
      std::vector<SymId> syms;
      for (const std::string& s : word_to_symbols(w)) syms.push_back(tr.intern(s));
      tr.words.push_back(std::move(syms));
      tr.word_freq.push_back(1);
    } else {
      tr.word_freq[static_cast<size_t>(it->second)] += 1;
    }
  }

  // Creation order: alphabet symbols as first interned, merge outputs after.
  const size_t alphabet_size = tr.sym_text.size();
  if (target_size <= static_cast<int64_t>(Vocabulary::kNumSpecials + alphabet_size)) {
    throw std::invalid_argument(
        "train_bpe: target_size " + std::to_string(target_size) +
        " does not exceed the " + std::to_string(alphabet_size) +
        " initial character units plus " +
        std::to_string(Vocabulary::kNumSpecials) + " specials");
  }

  for (int32_t w = 0; w < static_cast<int32_t>(tr.words.size()); ++w) tr.count_word(w, +1);

  BpeModel model;
  std::vector<SymId> unit_order(alphabet_size);
  for (size_t i = 0; i < alphabet_size; ++i) unit_order[i] = static_cast<SymId>(i);

  while (static_cast<int64_t>(Vocabulary::kNumSpecials + unit_order.size()) <
         target_size) {
    int64_t best = 0;
    if (!tr.select(&best)) {
      model.warning = "train_bpe: target_size " + std::to_string(target_size) +
                      " unreachable; no adjacent pair occurs twice after " +
                      std::to_string(model.merges.merges.size()) + " merges";
      break;
    }
    const SymId left = static_cast<SymId>(best >> 32);
    const SymId right = static_cast<SymId>(static_cast<uint32_t>(best));
    const std::string left_s = tr.sym_text[static_cast<size_t>(left)];
    const std::string right_s = tr.sym_text[static_cast<size_t>(right)];
    const bool existed = tr.sym_id.count(left_s + right_s) > 0;
    const SymId merged = tr.intern(left_s + right_s);
    model.merges.rank.emplace(MergeTable::key(left_s, right_s),
                              static_cast<int32_t>(model.merges.merges.size()));
    model.merges.merges.emplace_back(left_s, right_s);
    if (!existed) unit_order.push_back(merged);
    tr.apply_merge(best, merged);
  }

  // Unit frequencies over the fully merged corpus.
  std::vector<int64_t> sym_freq(tr.sym_text.size(), 0);
  for (size_t w = 0; w < tr.words.size(); ++w) {
    for (SymId s : tr.words[w]) sym_freq[static_cast<size_t>(s)] += tr.word_freq[w];
  }

  // Ids: specials, then units by descending frequency (creation order on
  // ties) so adaptive-softmax cutoffs index a frequency-sorted vocabulary.
  std::vector<int64_t> by_freq(unit_order.size());
  for (size_t i = 0; i < by_freq.size(); ++i) by_freq[i] = static_cast<int64_t>(i);
  std::stable_sort(by_freq.begin(), by_freq.end(), [&](int64_t a, int64_t b) {
    return sym_freq[static_cast<size_t>(unit_order[static_cast<size_t>(a)])] >
           sym_freq[static_cast<size_t>(unit_order[static_cast<size_t>(b)])];
  });

  Vocabulary& v = model.vocab;
  for (const char* s : kSpecialUnits) {
    v.id.emplace(s, v.size());
    v.units.emplace_back(s);
    v.frequency.push_back(0);
  }
  for (int64_t idx : by_freq) {
    const SymId s = unit_order[static_cast<size_t>(idx)];
    v.id.emplace(tr.sym_text[static_cast<size_t>(s)], v.size());
    v.units.push_back(tr.sym_text[static_cast<size_t>(s)]);
    v.frequency.push_back(sym_freq[static_cast<size_t>(s)]);
  }
  return model;
}

std::vector<int64_t> encode(std::string_view text, const MergeTable& merges,
                            const Vocabulary& vocab, bool lowercase) {
  const std::string norm = lowercase ? lowercase_ascii(text) : std::string(text);
  std::vector<int64_t> ids;
  for (const std::string& word : split_words(norm)) {
    std::vector<std::string> syms = word_to_symbols(word);
    // Repeatedly apply the lowest-ranked merge present in the word.
    while (syms.size() > 1) {
      int32_t best_rank = -1;
      size_t best_i = 0;
      for (size_t i = 0; i + 1 < syms.size(); ++i) {
        const int32_t r = merges.rank_of(syms[i], syms[i + 1]);
        if (r >= 0 && (best_rank < 0 || r < best_rank)) {
          best_rank = r;
          best_i = i;
        }
      }
      if (best_rank < 0) break;
      const std::string& l = merges.merges[static_cast<size_t>(best_rank)].first;
      const std::string& r = merges.merges[static_cast<size_t>(best_rank)].second;
      std::vector<std::string> out;
      out.reserve(syms.size());
      for (size_t i = 0; i < syms.size();) {
        if (i + 1 < syms.size() && syms[i] == l && syms[i + 1] == r) {
          out.push_back(l + r);
          i += 2;
        } else {
          out.push_back(syms[i]);
          ++i;
        }
      }
      (void)best_i;
      syms = std::move(out);
    }
    for (const std::string& s : syms) ids.push_back(vocab.id_of(s));
  }
  return ids;
}

std::string decode(const std::vector<int64_t>& ids, const Vocabulary& vocab) {
  std::string joined;
  for (int64_t id : ids) {
    if (id < 0 || id >= vocab.size()) {
      throw std::out_of_range("decode: id " + std::to_string(id) +
                              " outside vocabulary of " + std::to_string(vocab.size()));
    }
    if (Vocabulary::is_special(id)) continue;
    joined += vocab.units[static_cast<size_t>(id)];
  }
  std::string out;
  size_t i = 0;
  const std::string marker = kWordMarker;
  while (i < joined.size()) {
    if (joined.compare(i, marker.size(), marker) == 0) {
      out.push_back(' ');
      i += marker.size();
    } else {
      out.push_back(joined[i]);
      ++i;
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

void save_merges(const std::string& path, const MergeTable& merges) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_merges: cannot open " + path);
  for (const auto& [l, r] : merges.merges) f << l << ' ' << r << '\n';
}

MergeTable load_merges(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_merges: cannot open " + path);
  MergeTable t;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const size_t sp = line.find(' ');
    if (sp == std::string::npos || sp == 0 || sp + 1 >= line.size()) {
      throw std::runtime_error("load_merges: malformed line '" + line + "' in " + path);
    }
    std::string l = line.substr(0, sp);
    std::string r = line.substr(sp + 1);
    t.rank.emplace(MergeTable::key(l, r), static_cast<int32_t>(t.merges.size()));
    t.merges.emplace_back(std::move(l), std::move(r));
  }
  return t;
}

void save_vocab(const std::string& path, const Vocabulary& vocab) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_vocab: cannot open " + path);
  for (int64_t i = 0; i < vocab.size(); ++i) {
    f << vocab.units[static_cast<size_t>(i)] << '\t'
      << vocab.frequency[static_cast<size_t>(i)] << '\n';
  }
}

Vocabulary load_vocab(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_vocab: cannot open " + path);
  Vocabulary v;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw std::runtime_error("load_vocab: malformed line '" + line + "' in " + path);
    }
    std::string unit = line.substr(0, tab);
    v.frequency.push_back(std::stoll(line.substr(tab + 1)));
    v.id.emplace(unit, v.size());
    v.units.push_back(std::move(unit));
  }
  for (int64_t i = 0; i < Vocabulary::kNumSpecials; ++i) {
    if (v.size() <= i || v.units[static_cast<size_t>(i)] != kSpecialUnits[i]) {
      throw std::runtime_error("load_vocab: " + path +
                               " does not start with the four special tokens");
    }
  }
  return v;
}

}  // namespace tlm
