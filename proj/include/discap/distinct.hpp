#pragma once

#include <map>
#include <string>
#include <vector>

#include "discap/dataset.hpp"
#include "discap/groups.hpp"
#include "discap/metrics.hpp"
#include "discap/text.hpp"

namespace discap {

// Distinctive word set of one target image with per-word relatedness
// weights. Weights are keyed exactly by omega's words; the maximum weight is
// 1 whenever omega is nonempty.
struct DistinctProfile {
  std::string target;
  WordSet omega;
  std::map<std::string, double> weights;
};

// omega = f_set(target captions) - f_set(similar captions).
WordSet distinct_words(const std::vector<TokenSeq>& target_gts,
                       const std::vector<TokenSeq>& similar_gts);

// Template sentence whose embedding stands in for a word.
std::string relatedness_sentence(const std::string& word);

// Relatedness of each distinctive word to the image: raw dot product of the
// template-sentence embedding with the image embedding, clamped below at 0,
// then max-normalized. All-nonpositive inputs fall back to uniform 1.
// The store must contain a vector for relatedness_sentence(word) of every
// word in omega, keyed by the exact template string.
std::map<std::string, double> relatedness_weights(const WordSet& omega,
                                                  const EmbeddingStore& sentence_store,
                                                  const std::vector<float>& image_vec);

enum class IndicatorRule { kMedian, kThreshold };

// Per-GT-caption distinctive/common split, one label per caption of the
// target, with the CIDErBtw score used for the decision.
struct CaptionIndicator {
  std::vector<bool> distinctive;
  std::vector<double> scores;
};

// Scores each target GT caption by CIDErBtw against the group's similar
// images. Median rule: strictly below the median of the target's caption
// scores is distinctive. Threshold rule: strictly below tau is distinctive.
CaptionIndicator indicate_captions(const std::vector<TokenSeq>& target_gts,
                                   const ImageGroup& group, const CaptionDataset& dataset,
                                   const IdfTable& idf, IndicatorRule rule,
                                   double tau = 0.0);

}  // namespace discap
