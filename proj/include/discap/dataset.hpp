#pragma once

#include <map>
#include <string>
#include <vector>

#include "discap/text.hpp"

namespace discap {

struct ImageEntry {
  std::string id;
  std::vector<std::string> captions;   // raw strings as loaded
  std::vector<TokenSeq> tokenized;     // cached tokenize() of each caption
};

// Image ids mapped to their ground-truth caption lists. Every image has at
// least one caption; ids are unique.
class CaptionDataset {
 public:
  void add(const std::string& id, std::vector<std::string> captions);

  bool contains(const std::string& id) const { return index_.count(id) > 0; }
  const ImageEntry& at(const std::string& id) const;
  const std::vector<ImageEntry>& images() const { return images_; }
  size_t size() const { return images_.size(); }
  bool empty() const { return images_.empty(); }

 private:
  std::vector<ImageEntry> images_;
  std::map<std::string, size_t> index_;
};

}  // namespace discap
