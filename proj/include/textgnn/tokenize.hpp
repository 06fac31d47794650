#pragma once

#include <algorithm>
#include <cctype>
#include <string>
#include <unordered_map>
#include <vector>

#include "textgnn/errors.hpp"
#include "textgnn/rng.hpp"
#include "textgnn/tensor.hpp"

namespace textgnn {

// Lowercase, strip control characters, collapse runs of whitespace. ASCII
// case folding only; non-ASCII UTF-8 bytes pass through untouched.
inline std::string normalize_text(const std::string& raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  for (unsigned char c : raw) {
    if (c < 0x20 || c == 0x7f) c = ' ';
    if (c == ' ' || c == '\t') {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

inline std::vector<std::string> split_words(const std::string& normalized) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < normalized.size()) {
    std::size_t j = normalized.find(' ', i);
    if (j == std::string::npos) j = normalized.size();
    if (j > i) words.push_back(normalized.substr(i, j - i));
    i = j + 1;
  }
  return words;
}

struct Vocabulary {
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;

  std::vector<std::string> tokens;  // id -> token, reserved ids first
  std::unordered_map<std::string, int> ids;
  int max_seq_len = 16;

  int size() const { return static_cast<int>(tokens.size()); }
  bool contains(const std::string& tok) const { return ids.count(tok) != 0; }
  int id_of(const std::string& tok) const {
    auto it = ids.find(tok);
    return it == ids.end() ? -1 : it->second;
  }
};

inline const std::vector<std::string>& reserved_tokens() {
  static const std::vector<std::string> r = {"[PAD]", "[UNK]", "[CLS]", "[SEP]"};
  return r;
}

// Rebuild a vocabulary from an id-ordered token list (checkpoint restore or
// an external subword vocab file). Reserved tokens are prepended when the
// list does not already start with them.
inline Vocabulary vocab_from_tokens(const std::vector<std::string>& toks, int max_seq_len) {
  Vocabulary v;
  v.max_seq_len = max_seq_len;
  const bool has_reserved = toks.size() >= 4 && toks[0] == "[PAD]" && toks[1] == "[UNK]" &&
                            toks[2] == "[CLS]" && toks[3] == "[SEP]";
  if (!has_reserved) v.tokens = reserved_tokens();
  v.tokens.insert(v.tokens.end(), toks.begin(), toks.end());
  for (int i = 0; i < v.size(); ++i)
    if (!v.ids.emplace(v.tokens[i], i).second)
      throw DataError("vocabulary contains duplicate token '" + v.tokens[i] + "'");
  return v;
}

// Tokens ranked by (count desc, token asc); reserved ids come first and are
// never remapped. max_size bounds the total entry count, reserved included.
template <typename Range>
Vocabulary build_vocab(const Range& corpus, int min_count, int max_size, int max_seq_len = 16) {
  std::unordered_map<std::string, long> counts;
  bool any = false;
  for (const auto& line : corpus) {
    any = true;
    for (const auto& w : split_words(normalize_text(line))) ++counts[w];
  }
  if (!any) throw DataError("build_vocab: empty corpus");
  if (max_size < 4) throw DataError("build_vocab: max_size must admit the 4 reserved ids");

  std::vector<std::pair<std::string, long>> ranked(counts.begin(), counts.end());
  std::erase_if(ranked, [&](const auto& kv) { return kv.second < min_count; });
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocabulary v;
  v.max_seq_len = max_seq_len;
  v.tokens = reserved_tokens();
  for (const auto& [tok, cnt] : ranked) {
    if (static_cast<int>(v.tokens.size()) >= max_size) break;
    v.tokens.push_back(tok);
  }
  for (int i = 0; i < v.size(); ++i) v.ids.emplace(v.tokens[i], i);
  return v;
}

struct TokenSequence {
  std::vector<int> ids;
  std::vector<bool> attention_mask;  // false on padding

  int real_token_count() const {
    return static_cast<int>(std::count(attention_mask.begin(), attention_mask.end(), true));
  }
};

// Greedy longest-prefix matching of each word against the vocabulary; a word
// with no matching prefix at any point becomes a single UNK.
inline std::vector<int> word_piece_ids(const std::string& word, const Vocabulary& vocab) {
  std::vector<int> pieces;
  std::size_t i = 0;
  while (i < word.size()) {
    std::size_t best_len = 0;
    int best_id = -1;
    for (std::size_t len = word.size() - i; len >= 1; --len) {
      int id = vocab.id_of(word.substr(i, len));
      if (id >= 0) {
        best_len = len;
        best_id = id;
        break;
      }
    }
    if (best_id < 0) return {Vocabulary::kUnk};
    pieces.push_back(best_id);
    i += best_len;
  }
  return pieces;
}

inline TokenSequence tokenize(const std::string& text, const Vocabulary& vocab, bool add_special) {
  std::vector<int> ids;
  if (add_special) ids.push_back(Vocabulary::kCls);
  const int budget = vocab.max_seq_len - (add_special ? 2 : 0);
  int used = 0;
  for (const auto& w : split_words(normalize_text(text))) {
    if (used >= budget) break;
    for (int id : word_piece_ids(w, vocab)) {
      if (used >= budget) break;
      ids.push_back(id);
      ++used;
    }
  }
  if (add_special) ids.push_back(Vocabulary::kSep);

  TokenSequence seq;
  seq.ids = std::move(ids);
  seq.attention_mask.assign(seq.ids.size(), true);
  while (static_cast<int>(seq.ids.size()) < vocab.max_seq_len) {
    seq.ids.push_back(Vocabulary::kPad);
    seq.attention_mask.push_back(false);
  }
  return seq;
}

// Letter trigram counts of "#word#", FNV-1a hashed into `buckets` bins,
// one sparse vector per word. Deterministic: entries sorted by bucket.
inline std::vector<SparseCounts> trigram_counts_per_word(const std::string& text, int buckets) {
  if (buckets < 1) throw ContractError("trigram_hash: buckets must be >= 1");
  std::vector<SparseCounts> out;
  for (const auto& w : split_words(normalize_text(text))) {
    std::unordered_map<int, int> counts;
    const std::string marked = "#" + w + "#";
    for (std::size_t i = 0; i + 3 <= marked.size(); ++i) {
      const int bucket =
          static_cast<int>(fnv1a64(std::string_view(marked).substr(i, 3)) % buckets);
      ++counts[bucket];
    }
    SparseCounts sc(counts.begin(), counts.end());
    std::sort(sc.begin(), sc.end());
    out.push_back(std::move(sc));
  }
  return out;
}

// Whole-text trigram count vector: the per-word vectors summed.
inline SparseCounts trigram_hash(const std::string& text, int buckets) {
  std::unordered_map<int, Real> total;
  for (const auto& word_counts : trigram_counts_per_word(text, buckets))
    for (const auto& [bucket, cnt] : word_counts) total[bucket] += cnt;
  SparseCounts sc(total.begin(), total.end());
  std::sort(sc.begin(), sc.end());
  return sc;
}

}  // namespace textgnn
