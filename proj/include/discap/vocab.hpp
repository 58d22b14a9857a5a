#pragma once

#include <map>
#include <string>
#include <vector>

#include "discap/dataset.hpp"
#include "discap/text.hpp"

namespace discap {

// Word <-> token-id mapping for the toy decoder and memory classifier.
// Ids 0..size-1 are words in sorted order; id size is the start/end marker.
struct Vocab {
  std::vector<std::string> words;
  std::map<std::string, int> ids;

  static Vocab from_words(std::vector<std::string> word_list);
  static Vocab from_dataset(const CaptionDataset& dataset);

  int size() const { return static_cast<int>(words.size()); }
  int marker() const { return size(); }
  bool contains(const std::string& word) const { return ids.count(word) > 0; }
  int id(const std::string& word) const;
  const std::string& word(int id) const;

  // Token ids for in-vocabulary words, preserving order; OOV words dropped.
  std::vector<int> encode(const TokenSeq& tokens) const;
  TokenSeq decode(const std::vector<int>& ids) const;
};

}  // namespace discap
