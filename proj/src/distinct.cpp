#include "discap/distinct.hpp"

#include <algorithm>

#include "discap/errors.hpp"

namespace discap {

WordSet distinct_words(const std::vector<TokenSeq>& target_gts,
                       const std::vector<TokenSeq>& similar_gts) {
  if (target_gts.empty()) throw ValidationError("distinct_words: target has no captions");
  WordSet target_words = word_set(target_gts);
  WordSet similar_words = word_set(similar_gts);
  WordSet omega;
  std::set_difference(target_words.begin(), target_words.end(), similar_words.begin(),
                      similar_words.end(), std::inserter(omega, omega.begin()));
  return omega;
}

std::string relatedness_sentence(const std::string& word) {
  return "this picture includes " + word;
}

std::map<std::string, double> relatedness_weights(const WordSet& omega,
                                                  const EmbeddingStore& sentence_store,
                                                  const std::vector<float>& image_vec) {
  std::map<std::string, double> raw;
  double max_raw = 0.0;
  for (const std::string& word : omega) {
    std::string key = relatedness_sentence(word);
    if (!sentence_store.contains(key)) {
      throw ValidationError("relatedness_weights: no embedding for template sentence of word '" +
                            word + "'");
    }
    const std::vector<float>& sent = sentence_store.vec(key);
    if (sent.size() != image_vec.size()) {
      throw ValidationError("relatedness_weights: sentence/image embedding dim mismatch");
    }
    double d = 0.0;
    for (size_t i = 0; i < sent.size(); ++i) d += static_cast<double>(sent[i]) * image_vec[i];
    d = std::max(0.0, d);  // negative dot products clamp to 0 before normalization
    raw[word] = d;
    max_raw = std::max(max_raw, d);
  }
  std::map<std::string, double> weights;
  for (const auto& [word, value] : raw) {
    // uniform fallback when every raw relatedness is nonpositive
    weights[word] = max_raw > 0.0 ? value / max_raw : 1.0;
  }
  return weights;
}

CaptionIndicator indicate_captions(const std::vector<TokenSeq>& target_gts,
                                   const ImageGroup& group, const CaptionDataset& dataset,
                                   const IdfTable& idf, IndicatorRule rule, double tau) {
  if (target_gts.empty()) throw ValidationError("indicate_captions: no GT captions");
  CaptionIndicator indicator;
  indicator.scores.reserve(target_gts.size());
  for (const TokenSeq& caption : target_gts) {
    indicator.scores.push_back(cider_btw(caption, group, dataset, idf));
  }
  double cutoff = tau;
  if (rule == IndicatorRule::kMedian) {
    std::vector<double> sorted = indicator.scores;
    std::sort(sorted.begin(), sorted.end());
    size_t n = sorted.size();
    cutoff = n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  }
  indicator.distinctive.reserve(target_gts.size());
  for (double score : indicator.scores) {
    indicator.distinctive.push_back(score < cutoff);
  }
  return indicator;
}

}  // namespace discap
