#include "discap/groups.hpp"

#include <algorithm>
#include <cmath>

#include "discap/errors.hpp"
#include "discap/rng.hpp"

namespace discap {

namespace {

double cosine_f(const std::vector<float>& u, const std::vector<float>& v) {
  double d = 0.0, nu = 0.0, nv = 0.0;
  for (size_t i = 0; i < u.size(); ++i) {
    d += static_cast<double>(u[i]) * v[i];
    nu += static_cast<double>(u[i]) * u[i];
    nv += static_cast<double>(v[i]) * v[i];
  }
  return d / (std::sqrt(nu) * std::sqrt(nv));
}

// Top-k ids by (score desc, id asc).
std::vector<std::string> take_top(std::vector<std::pair<double, std::string>>& scored, int k) {
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<std::string> out;
  out.reserve(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) out.push_back(std::move(scored[static_cast<size_t>(i)].second));
  return out;
}

}  // namespace

void EmbeddingStore::add(const std::string& id, std::vector<float> vec, const std::string& owner) {
  if (vectors_.count(id)) {
    throw ValidationError("duplicate embedding id: " + id);
  }
  if (vectors_.empty()) {
    dim_ = static_cast<int>(vec.size());
  } else if (static_cast<int>(vec.size()) != dim_) {
    throw ValidationError("embedding '" + id + "' has dim " + std::to_string(vec.size()) +
                          ", store dim is " + std::to_string(dim_));
  }
  double sq = 0.0;
  for (float x : vec) {
    if (!std::isfinite(x)) throw ValidationError("embedding '" + id + "' has a non-finite component");
    sq += static_cast<double>(x) * x;
  }
  if (sq == 0.0) throw ValidationError("embedding '" + id + "' is the zero vector");
  if (kind_ == StoreKind::kCaption) {
    if (owner.empty()) throw ValidationError("caption embedding '" + id + "' has no owner image id");
    owners_[id] = owner;
    by_owner_[owner].push_back(id);
  }
  vectors_.emplace(id, std::move(vec));
}

const std::vector<float>& EmbeddingStore::vec(const std::string& id) const {
  auto it = vectors_.find(id);
  if (it == vectors_.end()) throw ValidationError("unknown embedding id: " + id);
  return it->second;
}

const std::string& EmbeddingStore::owner(const std::string& id) const {
  auto it = owners_.find(id);
  if (it == owners_.end()) throw ValidationError("embedding '" + id + "' has no owner");
  return it->second;
}

std::vector<std::string> ImageGroup::members() const {
  std::vector<std::string> out;
  out.reserve(similars.size() + 1);
  out.push_back(target);
  out.insert(out.end(), similars.begin(), similars.end());
  return out;
}

std::vector<std::string> nearest(const EmbeddingStore& store, const std::string& query_id,
                                 int k, const std::vector<std::string>& pool) {
  const std::vector<float>& query = store.vec(query_id);
  std::vector<std::pair<double, std::string>> scored;
  scored.reserve(pool.size());
  for (const std::string& id : pool) {
    if (id == query_id) continue;
    scored.emplace_back(cosine_f(query, store.vec(id)), id);
  }
  if (static_cast<int>(scored.size()) < k) {
    throw ValidationError("nearest: pool has " + std::to_string(scored.size()) +
                          " candidates, need " + std::to_string(k));
  }
  return take_top(scored, k);
}

std::vector<std::string> nearest_by_caption(const EmbeddingStore& image_store,
                                            const EmbeddingStore& caption_store,
                                            const std::string& query_id, int k,
                                            const std::vector<std::string>& pool) {
  const std::vector<float>& query = image_store.vec(query_id);
  std::vector<std::pair<double, std::string>> scored;
  scored.reserve(pool.size());
  for (const std::string& id : pool) {
    if (id == query_id) continue;
    double best = -2.0;  // below any cosine; images with no captions rank last
    auto it = caption_store.by_owner().find(id);
    if (it != caption_store.by_owner().end()) {
      for (const std::string& cap_id : it->second) {
        best = std::max(best, cosine_f(query, caption_store.vec(cap_id)));
      }
    }
    scored.emplace_back(best, id);
  }
  if (static_cast<int>(scored.size()) < k) {
    throw ValidationError("nearest: pool has " + std::to_string(scored.size()) +
                          " candidates, need " + std::to_string(k));
  }
  return take_top(scored, k);
}

std::vector<ImageGroup> build_groups(const EmbeddingStore& store,
                                     const CaptionDataset& dataset, int k_similar,
                                     uint64_t seed, GroupMode mode,
                                     const EmbeddingStore* caption_store) {
  if (dataset.empty()) throw ValidationError("build_groups: empty dataset");
  if (k_similar < 0) throw ValidationError("build_groups: negative K");
  if (k_similar >= static_cast<int>(dataset.size())) {
    throw ValidationError("build_groups: K = " + std::to_string(k_similar) +
                          " >= dataset size " + std::to_string(dataset.size()));
  }
  if (mode == GroupMode::kCaptionRetrieval && caption_store == nullptr) {
    throw ValidationError("build_groups: caption-retrieval mode needs a caption store");
  }

  std::vector<std::string> all_ids;
  all_ids.reserve(dataset.size());
  for (const ImageEntry& entry : dataset.images()) {
    store.vec(entry.id);  // reject images without embeddings
    all_ids.push_back(entry.id);
  }
  std::sort(all_ids.begin(), all_ids.end());

  auto retrieve = [&](const std::string& target, const std::vector<std::string>& pool) {
    return mode == GroupMode::kImageImage
               ? nearest(store, target, k_similar, pool)
               : nearest_by_caption(store, *caption_store, target, k_similar, pool);
  };

  Rng rng(seed);
  std::vector<std::string> remaining = all_ids;
  std::vector<ImageGroup> groups;
  while (static_cast<int>(remaining.size()) >= k_similar + 1) {
    size_t pick = rng.below(remaining.size());
    ImageGroup group;
    group.target = remaining[pick];
    group.similars = retrieve(group.target, remaining);
    groups.push_back(group);
    for (const std::string& member : group.members()) {
      remaining.erase(std::find(remaining.begin(), remaining.end(), member));
    }
  }
  // Leftovers: targets one by one, similars from the whole image pool.
  for (const std::string& id : remaining) {
    ImageGroup group;
    group.target = id;
    group.similars = retrieve(id, all_ids);
    group.leftover = true;
    groups.push_back(std::move(group));
  }
  return groups;
}

}  // namespace discap
