#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "discap/dataset.hpp"
#include "discap/groups.hpp"
#include "discap/text.hpp"

namespace discap {

// Document-frequency statistics over a reference corpus, orders 1..4.
// df(g) counts images whose reference set contains g at least once;
// idf(g) = ln(corpus_size / df), with df floored at 1 for unseen grams.
struct IdfTable {
  static constexpr int kMaxOrder = 4;

  double corpus_size = 0.0;
  double idf_scale = 1.0;  // diagnostic multiplier; scores are invariant to it
  std::array<std::map<std::string, int>, kMaxOrder> df;

  double idf(int order, const std::string& gram) const;
};

IdfTable idf_build(const CaptionDataset& dataset);

enum class CiderVariant {
  kCiderD,  // clipped counts + Gaussian length penalty (published MSCOCO numbers)
  kPlain,   // raw tf-idf cosine, no penalty
};

// Consensus score in [0, 10]: per-order tf-idf similarity against each
// reference, averaged over orders 1..4 and over references, times 10.
double cider(const TokenSeq& candidate, const std::vector<TokenSeq>& refs,
             const IdfTable& idf, double sigma = 6.0,
             CiderVariant variant = CiderVariant::kCiderD);

// s_k of a candidate against one image's GT set: mean of single-reference
// CIDEr calls. Shared with the RL reward.
double per_image_similarity(const TokenSeq& candidate,
                            const std::vector<TokenSeq>& gt_set,
                            const IdfTable& idf);

// Mean of s_1..s_K over the group's similar images; lower = more distinctive.
double cider_btw(const TokenSeq& candidate, const ImageGroup& group,
                 const CaptionDataset& dataset, const IdfTable& idf);

// Descending rank of s_0 among {s_0..s_K}; ties favor the target, so
// rank = 1 + |{k : s_k > s_0}|, in [1, K+1].
int cider_rank(const TokenSeq& candidate, const ImageGroup& group,
               const CaptionDataset& dataset, const IdfTable& idf);

// max over references i of |omega ∩ candidate ∩ C_0^i| / |omega ∩ C_0^i|;
// references with empty denominator are skipped. Empty optional when every
// reference is skipped (the image is then excluded from corpus averaging).
std::optional<double> dis_word_rate(const TokenSeq& candidate, const WordSet& omega,
                                    const std::vector<TokenSeq>& target_gts);

// Corpus BLEU-n in [0, 1]: geometric mean of clipped modified precisions
// for orders 1..n with brevity penalty. Reference length uses the closest
// reference (ties toward the shorter one).
double bleu(const std::vector<TokenSeq>& candidates,
            const std::vector<std::vector<TokenSeq>>& refs, int order);

struct ImageMetrics {
  std::string image_id;
  double cider = 0.0;
  double cider_btw = 0.0;
  int cider_rank = 1;
  std::optional<double> dis_word_rate;
  std::array<double, 4> bleu{};  // sentence-level BLEU-1..4
};

struct MetricReport {
  std::vector<ImageMetrics> per_image;  // sorted by image id
  double mean_cider = 0.0;
  double mean_cider_btw = 0.0;
  double mean_cider_rank = 0.0;
  std::optional<double> mean_dis_word_rate;
  int dis_word_rate_excluded = 0;  // images whose ratio was undefined
  std::array<double, 4> mean_bleu{};
  std::array<double, 4> corpus_bleu{};  // corpus-formula aggregate
};

// Per-group-target metrics plus corpus means. `omegas` may be null when no
// distinctive-word profiles are available; DisWordRate is then omitted.
MetricReport corpus_report(const std::map<std::string, TokenSeq>& candidates,
                           const CaptionDataset& dataset,
                           const std::vector<ImageGroup>& groups,
                           const std::map<std::string, WordSet>* omegas,
                           const IdfTable& idf);

}  // namespace discap
