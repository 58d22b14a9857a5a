#include "discap/dataset.hpp"

#include "discap/errors.hpp"

namespace discap {

void CaptionDataset::add(const std::string& id, std::vector<std::string> captions) {
  if (index_.count(id)) {
    throw ValidationError("duplicate image id: " + id);
  }
  if (captions.empty()) {
    throw ValidationError("image '" + id + "' has an empty caption list");
  }
  ImageEntry entry;
  entry.id = id;
  entry.tokenized.reserve(captions.size());
  for (const std::string& caption : captions) {
    entry.tokenized.push_back(tokenize(caption));
  }
  entry.captions = std::move(captions);
  index_[id] = images_.size();
  images_.push_back(std::move(entry));
}

const ImageEntry& CaptionDataset::at(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) {
    throw ValidationError("unknown image id: " + id);
  }
  return images_[it->second];
}

}  // namespace discap
