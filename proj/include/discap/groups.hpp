#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "discap/dataset.hpp"

namespace discap {

enum class StoreKind { kImage, kCaption };

// id -> embedding vector. Caption stores additionally map each entry to the
// image that owns the caption. Entries are kept id-sorted so results never
// depend on insertion order.
class EmbeddingStore {
 public:
  explicit EmbeddingStore(StoreKind kind = StoreKind::kImage) : kind_(kind) {}

  // Rejects dimension mismatches, non-finite components, zero vectors
  // (embeddings must be unit-normalizable), and duplicate ids.
  void add(const std::string& id, std::vector<float> vec, const std::string& owner = "");

  StoreKind kind() const { return kind_; }
  int dim() const { return dim_; }
  size_t size() const { return vectors_.size(); }
  bool contains(const std::string& id) const { return vectors_.count(id) > 0; }
  const std::vector<float>& vec(const std::string& id) const;
  const std::string& owner(const std::string& id) const;

  const std::map<std::string, std::vector<float>>& entries() const { return vectors_; }

  // Caption ids grouped by owning image (caption stores only).
  const std::map<std::string, std::vector<std::string>>& by_owner() const { return by_owner_; }

 private:
  StoreKind kind_;
  int dim_ = 0;
  std::map<std::string, std::vector<float>> vectors_;
  std::map<std::string, std::string> owners_;
  std::map<std::string, std::vector<std::string>> by_owner_;
};

// K+1 image ids, target first.
struct ImageGroup {
  std::string target;
  std::vector<std::string> similars;
  bool leftover = false;  // built in the leftover phase, similars drawn from the full pool

  std::vector<std::string> members() const;
};

enum class GroupMode { kImageImage, kCaptionRetrieval };

// The k pool ids most cosine-similar to the query vector, descending; ties
// break toward the ascending id. The query id itself is never returned.
std::vector<std::string> nearest(const EmbeddingStore& store, const std::string& query_id,
                                 int k, const std::vector<std::string>& pool);

// Caption-retrieval variant: candidates are ranked by the best cosine
// between the query image vector and any caption vector owned by the
// candidate. Candidates with no caption vectors rank last.
std::vector<std::string> nearest_by_caption(const EmbeddingStore& image_store,
                                            const EmbeddingStore& caption_store,
                                            const std::string& query_id, int k,
                                            const std::vector<std::string>& pool);

// Greedy partition into similar image groups: targets drawn in seeded random
// order, each group's K+1 members removed from the pool. Once fewer than K+1
// images remain, each leftover becomes a target whose similars come from the
// whole image set. Deterministic given (store, dataset, K, seed).
// caption_store is required in caption-retrieval mode, ignored otherwise.
std::vector<ImageGroup> build_groups(const EmbeddingStore& store,
                                     const CaptionDataset& dataset, int k_similar,
                                     uint64_t seed, GroupMode mode,
                                     const EmbeddingStore* caption_store = nullptr);

}  // namespace discap
