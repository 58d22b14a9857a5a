#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

namespace discap {

// Ordered sequence of normalized lowercase tokens.
using TokenSeq = std::vector<std::string>;

// Unique tokens with set semantics; std::set keeps iteration deterministic.
using WordSet = std::set<std::string>;

// Sliding-window n-gram counts for one order. Grams are keyed by their
// tokens joined with a single space (tokens never contain whitespace).
struct NGramCounts {
  int order = 1;
  std::map<std::string, int> counts;

  int total() const;
};

// Lowercases, maps every character outside [a-z0-9'] to a space, and splits
// on whitespace runs. Empty input gives an empty sequence.
TokenSeq tokenize(const std::string& raw);

// Space-joins a token sequence; tokenize(join_tokens(t)) == t.
std::string join_tokens(const TokenSeq& seq);

// Contiguous n-gram counts. order must be in [1, 4].
NGramCounts ngrams(const TokenSeq& seq, int order);

// Union of unique tokens across captions (the f_set conversion).
WordSet word_set(const std::vector<TokenSeq>& captions);

}  // namespace discap
