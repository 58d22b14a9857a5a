#include "discap/text.hpp"

#include "discap/errors.hpp"

namespace discap {

int NGramCounts::total() const {
  int sum = 0;
  for (const auto& [gram, count] : counts) sum += count;
  return sum;
}

TokenSeq tokenize(const std::string& raw) {
  TokenSeq tokens;
  std::string current;
  for (char raw_ch : raw) {
    unsigned char ch = static_cast<unsigned char>(raw_ch);
    if (ch >= 'A' && ch <= 'Z') ch = static_cast<unsigned char>(ch - 'A' + 'a');
    bool keep = (ch >= 'a' && ch <= 'z') || (ch >= '0' && ch <= '9') || ch == '\'';
    if (keep) {
      current.push_back(static_cast<char>(ch));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::string join_tokens(const TokenSeq& seq) {
  std::string out;
  for (size_t i = 0; i < seq.size(); ++i) {
    if (i > 0) out.push_back(' ');
    out += seq[i];
  }
  return out;
}

NGramCounts ngrams(const TokenSeq& seq, int order) {
  if (order < 1 || order > 4) {
    throw ValidationError("ngram order must be in [1,4], got " + std::to_string(order));
  }
  NGramCounts result;
  result.order = order;
  if (seq.size() < static_cast<size_t>(order)) return result;
  for (size_t start = 0; start + order <= seq.size(); ++start) {
    std::string gram = seq[start];
    for (int j = 1; j < order; ++j) {
      gram.push_back(' ');
      gram += seq[start + j];
    }
    ++result.counts[gram];
  }
  return result;
}

WordSet word_set(const std::vector<TokenSeq>& captions) {
  WordSet words;
  for (const TokenSeq& caption : captions) {
    words.insert(caption.begin(), caption.end());
  }
  return words;
}

}  // namespace discap
