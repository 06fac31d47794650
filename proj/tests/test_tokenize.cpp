#include <gtest/gtest.h>

#include "textgnn/tokenize.hpp"

using namespace textgnn;

TEST(BuildVocab, FrequencyThenLexicographicOrder) {
  auto v = build_vocab(std::vector<std::string>{"a b", "a"}, 1, 100);
  // "a" occurs twice, "b" once; "a" gets the smaller id after the reserved 4.
  EXPECT_EQ(v.id_of("a"), 4);
  EXPECT_EQ(v.id_of("b"), 5);
  EXPECT_EQ(v.size(), 6);
}

TEST(BuildVocab, MinCountFiltersRareTokens) {
  auto v = build_vocab(std::vector<std::string>{"a b", "a"}, 2, 100);
  EXPECT_TRUE(v.contains("a"));
  EXPECT_FALSE(v.contains("b"));
}

TEST(BuildVocab, MaxSizeIncludesReserved) {
  std::vector<std::string> corpus = {"w1 w2 w3 w4 w5 w1 w1 w2"};
  auto v = build_vocab(corpus, 1, 5);
  EXPECT_EQ(v.size(), 5);  // 4 reserved + the most frequent token
  EXPECT_TRUE(v.contains("w1"));
  EXPECT_FALSE(v.contains("w5"));
}

TEST(BuildVocab, EmptyCorpusThrows) {
  EXPECT_THROW(build_vocab(std::vector<std::string>{}, 1, 10), DataError);
}

TEST(Tokenize, EmptyStringGivesClsSepPadding) {
  auto v = build_vocab(std::vector<std::string>{"hello"}, 1, 10, 6);
  auto seq = tokenize("", v, true);
  ASSERT_EQ(seq.ids.size(), 6u);
  EXPECT_EQ(seq.ids[0], Vocabulary::kCls);
  EXPECT_EQ(seq.ids[1], Vocabulary::kSep);
  for (int i = 2; i < 6; ++i) {
    EXPECT_EQ(seq.ids[i], Vocabulary::kPad);
    EXPECT_FALSE(seq.attention_mask[i]);
  }
  EXPECT_EQ(seq.real_token_count(), 2);
}

TEST(Tokenize, KnownWordsBetweenClsSep) {
  auto v = build_vocab(std::vector<std::string>{"usps com careers login jobs"}, 1, 100, 8);
  auto seq = tokenize("usps com careers login", v, true);
  EXPECT_EQ(seq.real_token_count(), 6);  // CLS + 4 words + SEP
  for (int i = 1; i <= 4; ++i) {
    EXPECT_GE(seq.ids[i], 4);  // real vocabulary ids, not reserved
  }
  EXPECT_EQ(seq.ids[5], Vocabulary::kSep);
}

TEST(Tokenize, UnknownWordFallsBackToUnk) {
  auto v = build_vocab(std::vector<std::string>{"hello"}, 1, 10, 6);
  auto seq = tokenize("zzzzunknown", v, true);
  EXPECT_EQ(seq.ids[0], Vocabulary::kCls);
  EXPECT_EQ(seq.ids[1], Vocabulary::kUnk);
  EXPECT_EQ(seq.ids[2], Vocabulary::kSep);
  EXPECT_EQ(seq.ids[3], Vocabulary::kPad);
}

TEST(Tokenize, GreedyLongestMatchSplitsSubwords) {
  auto v = vocab_from_tokens({"play", "ing", "playing"}, 8);
  auto seq = tokenize("playing", v, false);
  // whole word present -> single piece
  EXPECT_EQ(seq.ids[0], v.id_of("playing"));
  auto v2 = vocab_from_tokens({"play", "ing"}, 8);
  auto seq2 = tokenize("playing", v2, false);
  EXPECT_EQ(seq2.ids[0], v2.id_of("play"));
  EXPECT_EQ(seq2.ids[1], v2.id_of("ing"));
}

TEST(Tokenize, OutputAlwaysMaxSeqLenAndMaskCountsRealTokens) {
  auto v = build_vocab(std::vector<std::string>{"a b c d e f g h i j"}, 1, 100, 8);
  for (const char* text : {"", "a", "a b c", "a b c d e f g h i j"}) {
    auto seq = tokenize(text, v, true);
    EXPECT_EQ(static_cast<int>(seq.ids.size()), v.max_seq_len);
    EXPECT_EQ(seq.ids.size(), seq.attention_mask.size());
    int words = static_cast<int>(split_words(normalize_text(text)).size());
    int expect_real = std::min(words, v.max_seq_len - 2) + 2;
    EXPECT_EQ(seq.real_token_count(), expect_real) << text;
    // non-pad region is a contiguous prefix
    bool seen_pad = false;
    for (std::size_t i = 0; i < seq.ids.size(); ++i) {
      if (!seq.attention_mask[i]) seen_pad = true;
      if (seen_pad) {
        EXPECT_FALSE(seq.attention_mask[i]);
        EXPECT_EQ(seq.ids[i], Vocabulary::kPad);
      }
    }
  }
}

TEST(Tokenize, RetokenizationIdempotentForInVocabText) {
  auto v = build_vocab(std::vector<std::string>{"usps com careers login"}, 1, 100, 8);
  auto seq1 = tokenize("USPS  Com   careers login", v, true);
  // detokenize the real tokens, then tokenize again
  std::string joined;
  for (std::size_t i = 0; i < seq1.ids.size(); ++i) {
    int id = seq1.ids[i];
    if (id <= Vocabulary::kSep) continue;
    if (!joined.empty()) joined += " ";
    joined += v.tokens[id];
  }
  auto seq2 = tokenize(joined, v, true);
  EXPECT_EQ(seq1.ids, seq2.ids);
}

TEST(TrigramHash, TwoTrigramsForTwoLetterWord) {
  auto counts = trigram_hash("ab", 4096);
  int total = 0;
  for (auto& [bucket, c] : counts) total += static_cast<int>(c);
  EXPECT_EQ(total, 2);  // "#ab" and "ab#"
  EXPECT_LE(counts.size(), 2u);
}

TEST(TrigramHash, EmptyTextGivesEmptyVector) {
  EXPECT_TRUE(trigram_hash("", 64).empty());
  EXPECT_TRUE(trigram_counts_per_word("", 64).empty());
}

TEST(TrigramHash, Deterministic) {
  auto a = trigram_hash("sponsored search relevance", 512);
  auto b = trigram_hash("sponsored search relevance", 512);
  EXPECT_EQ(a, b);
}

TEST(NormalizeText, StripsControlAndCollapsesWhitespace) {
  EXPECT_EQ(normalize_text("  Hello\tWorld\x01 NOW  "), "hello world now");
  EXPECT_EQ(normalize_text(""), "");
}
