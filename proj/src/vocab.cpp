#include "discap/vocab.hpp"

#include <algorithm>

#include "discap/errors.hpp"

namespace discap {

Vocab Vocab::from_words(std::vector<std::string> word_list) {
  std::sort(word_list.begin(), word_list.end());
  word_list.erase(std::unique(word_list.begin(), word_list.end()), word_list.end());
  Vocab vocab;
  vocab.words = std::move(word_list);
  for (size_t i = 0; i < vocab.words.size(); ++i) {
    vocab.ids[vocab.words[i]] = static_cast<int>(i);
  }
  return vocab;
}

Vocab Vocab::from_dataset(const CaptionDataset& dataset) {
  std::vector<std::string> words;
  for (const ImageEntry& entry : dataset.images()) {
    for (const TokenSeq& caption : entry.tokenized) {
      words.insert(words.end(), caption.begin(), caption.end());
    }
  }
  return from_words(std::move(words));
}

int Vocab::id(const std::string& word) const {
  auto it = ids.find(word);
  if (it == ids.end()) throw ValidationError("word not in vocabulary: " + word);
  return it->second;
}

const std::string& Vocab::word(int id) const {
  if (id < 0 || id >= size()) throw ValidationError("token id out of range: " + std::to_string(id));
  return words[static_cast<size_t>(id)];
}

std::vector<int> Vocab::encode(const TokenSeq& tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const std::string& token : tokens) {
    auto it = ids.find(token);
    if (it != ids.end()) out.push_back(it->second);
  }
  return out;
}

TokenSeq Vocab::decode(const std::vector<int>& token_ids) const {
  TokenSeq out;
  out.reserve(token_ids.size());
  for (int id : token_ids) {
    if (id != marker()) out.push_back(word(id));
  }
  return out;
}

}  // namespace discap
