#include <doctest.h>

#include "discap/errors.hpp"
#include "discap/rng.hpp"
#include "discap/text.hpp"

using namespace discap;

TEST_CASE("tokenize normalizes case and punctuation") {
  CHECK(tokenize("A man, riding!") == TokenSeq{"a", "man", "riding"});
  CHECK(tokenize("") == TokenSeq{});
  CHECK(tokenize("Don't STOP") == TokenSeq{"don't", "stop"});
  CHECK(tokenize("  \t\n ") == TokenSeq{});
  CHECK(tokenize("x2  --  y") == TokenSeq{"x2", "y"});
}

TEST_CASE("tokenize is idempotent over random strings") {
  Rng rng(7);
  const std::string alphabet = "abcXYZ012 '!,.-\t\xc3\xa9";
  for (int trial = 0; trial < 500; ++trial) {
    std::string s;
    size_t len = rng.below(40);
    for (size_t i = 0; i < len; ++i) s.push_back(alphabet[rng.below(alphabet.size())]);
    TokenSeq once = tokenize(s);
    CHECK(tokenize(join_tokens(once)) == once);
  }
}

TEST_CASE("ngrams sliding window counts") {
  TokenSeq aba{"a", "b", "a"};
  NGramCounts uni = ngrams(aba, 1);
  CHECK(uni.counts.at("a") == 2);
  CHECK(uni.counts.at("b") == 1);
  NGramCounts bi = ngrams(aba, 2);
  CHECK(bi.counts.at("a b") == 1);
  CHECK(bi.counts.at("b a") == 1);
  CHECK(ngrams(aba, 4).counts.empty());
  CHECK_THROWS_AS(ngrams(aba, 0), ValidationError);
  CHECK_THROWS_AS(ngrams(aba, 5), ValidationError);
}

TEST_CASE("ngram mass equals max(0, T-n+1)") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    TokenSeq seq;
    size_t len = rng.below(12);
    for (size_t i = 0; i < len; ++i) seq.push_back(std::string(1, static_cast<char>('a' + rng.below(4))));
    for (int n = 1; n <= 4; ++n) {
      int expected = std::max(0, static_cast<int>(len) - n + 1);
      CHECK(ngrams(seq, n).total() == expected);
    }
  }
}

TEST_CASE("word_set unions unique tokens") {
  CHECK(word_set({{"a", "red", "dog"}}) == WordSet{"a", "red", "dog"});
  CHECK(word_set({{"a", "dog"}, {"a", "dog"}}) == WordSet{"a", "dog"});
  CHECK(word_set({{"a", "dog"}, {"the", "cat"}}) == WordSet{"a", "dog", "the", "cat"});
}

TEST_CASE("word_set distributes over concatenation") {
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<TokenSeq> a, b;
    for (size_t i = 0; i < rng.below(4); ++i) {
      TokenSeq seq;
      for (size_t j = 0; j < rng.below(6); ++j) seq.push_back(std::string(1, static_cast<char>('a' + rng.below(5))));
      a.push_back(seq);
    }
    for (size_t i = 0; i < rng.below(4); ++i) {
      TokenSeq seq;
      for (size_t j = 0; j < rng.below(6); ++j) seq.push_back(std::string(1, static_cast<char>('a' + rng.below(5))));
      b.push_back(seq);
    }
    std::vector<TokenSeq> both = a;
    both.insert(both.end(), b.begin(), b.end());
    WordSet lhs = word_set(both);
    WordSet rhs = word_set(a);
    WordSet from_b = word_set(b);
    rhs.insert(from_b.begin(), from_b.end());
    CHECK(lhs == rhs);
  }
}
