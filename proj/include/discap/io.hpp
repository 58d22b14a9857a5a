#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "discap/dataset.hpp"
#include "discap/distinct.hpp"
#include "discap/groups.hpp"
#include "discap/losses.hpp"
#include "discap/metrics.hpp"
#include "discap/tensor.hpp"

namespace discap {

// ---- Caption datasets (JSON) ----------------------------------------------
// {"images":[{"id": "...", "captions": ["...", ...]}, ...]}

CaptionDataset read_captions(const std::string& path);
void write_captions(const CaptionDataset& dataset, const std::string& path);

// Caption dataset with exactly one caption per image.
std::map<std::string, TokenSeq> read_candidates(const std::string& path);

// ---- Embedding files (binary, magic "DDEM") --------------------------------
// All integers little-endian:
//   "DDEM" | version u32 = 1 | count u32 | dim u32
//   then count records of [id_len u16 | id UTF-8 | dim x f32]
// Caption stores derive each entry's owner image from the id, which must be
// "<image id>#<suffix>".

EmbeddingStore read_embeddings(const std::string& path, StoreKind kind = StoreKind::kImage);
void write_embeddings(const EmbeddingStore& store, const std::string& path);

// ---- Region feature files (binary, magic "DDRF") ----------------------------
//   "DDRF" | version u32 = 1 | count u32 | d u32
//   then count records of [id_len u16 | id | N u32 | N x d f32 row-major]

struct RegionFeatureSet {
  int dim = 0;
  std::map<std::string, Mat> features;
};

RegionFeatureSet read_region_features(const std::string& path);
void write_region_features(const RegionFeatureSet& set, const std::string& path);

// ---- Named-matrix checkpoints (binary, magic "DDCP") ------------------------
//   "DDCP" | version u32 = 1 | count u32
//   then count records of [name_len u16 | name | rows u32 | cols u32 |
//                          rows*cols f64 row-major]

void write_matrices(const std::map<std::string, Mat>& matrices, const std::string& path);
std::map<std::string, Mat> read_matrices(const std::string& path);

std::map<std::string, Mat> state_to_matrices(const TrainState& state);
TrainState state_from_matrices(const std::map<std::string, Mat>& matrices);

// ---- Groups (JSON) ----------------------------------------------------------

struct GroupsFile {
  int k = 0;
  std::string mode = "image-image";
  uint64_t seed = 0;
  std::vector<ImageGroup> groups;
};

GroupsFile read_groups(const std::string& path);
void write_groups(const GroupsFile& file, const std::string& path);

// ---- Distinctive-word profiles (JSON) ---------------------------------------

std::vector<DistinctProfile> read_profiles(const std::string& path);
void write_profiles(const std::vector<DistinctProfile>& profiles, const std::string& path);

// ---- Metric reports and training logs ---------------------------------------

void write_report(const MetricReport& report, const std::string& path);

ToyConfig read_toy_config(const std::string& path);

void write_train_log(const std::vector<TrainLogEntry>& log, const std::string& path);

}  // namespace discap
