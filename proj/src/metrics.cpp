#include "discap/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "discap/errors.hpp"

namespace discap {

double IdfTable::idf(int order, const std::string& gram) const {
  const auto& table = df[static_cast<size_t>(order - 1)];
  auto it = table.find(gram);
  double count = it == table.end() ? 1.0 : static_cast<double>(it->second);
  return idf_scale * std::log(corpus_size / count);
}

IdfTable idf_build(const CaptionDataset& dataset) {
  if (dataset.empty()) throw ValidationError("idf_build: empty dataset");
  IdfTable table;
  table.corpus_size = static_cast<double>(dataset.size());
  for (const ImageEntry& entry : dataset.images()) {
    for (int order = 1; order <= IdfTable::kMaxOrder; ++order) {
      WordSet seen;  // grams of this image, counted once
      for (const TokenSeq& caption : entry.tokenized) {
        for (const auto& [gram, count] : ngrams(caption, order).counts) {
          seen.insert(gram);
        }
      }
      auto& df = table.df[static_cast<size_t>(order - 1)];
      for (const std::string& gram : seen) ++df[gram];
    }
  }
  return table;
}

namespace {

// Per-order tf-idf vectors of one caption.
struct TfIdfProfile {
  std::array<std::map<std::string, double>, IdfTable::kMaxOrder> vec;
  std::array<double, IdfTable::kMaxOrder> norm{};
  int length = 0;
};

TfIdfProfile build_profile(const TokenSeq& seq, const IdfTable& idf) {
  TfIdfProfile profile;
  profile.length = static_cast<int>(seq.size());
  for (int order = 1; order <= IdfTable::kMaxOrder; ++order) {
    auto& vec = profile.vec[static_cast<size_t>(order - 1)];
    double sq = 0.0;
    for (const auto& [gram, count] : ngrams(seq, order).counts) {
      double w = static_cast<double>(count) * idf.idf(order, gram);
      vec.emplace(gram, w);
      sq += w * w;
    }
    profile.norm[static_cast<size_t>(order - 1)] = std::sqrt(sq);
  }
  return profile;
}

// Similarity of candidate vs one reference for one order.
double order_similarity(const TfIdfProfile& cand, const TfIdfProfile& ref, int order,
                        CiderVariant variant) {
  size_t n = static_cast<size_t>(order - 1);
  if (cand.norm[n] == 0.0 || ref.norm[n] == 0.0) return 0.0;
  const auto& ref_vec = ref.vec[n];
  double sum = 0.0;
  for (const auto& [gram, cand_w] : cand.vec[n]) {
    auto it = ref_vec.find(gram);
    if (it == ref_vec.end()) continue;
    double w = variant == CiderVariant::kCiderD ? std::min(cand_w, it->second) : cand_w;
    sum += w * it->second;
  }
  return sum / (cand.norm[n] * ref.norm[n]);
}

double cider_against_profile(const TfIdfProfile& cand, const TfIdfProfile& ref, double sigma,
                             CiderVariant variant) {
  double score = 0.0;
  double penalty = 1.0;
  if (variant == CiderVariant::kCiderD) {
    double delta = static_cast<double>(cand.length - ref.length);
    penalty = std::exp(-delta * delta / (2.0 * sigma * sigma));
  }
  for (int order = 1; order <= IdfTable::kMaxOrder; ++order) {
    score += order_similarity(cand, ref, order, variant) * penalty;
  }
  return score / static_cast<double>(IdfTable::kMaxOrder) * 10.0;
}

}  // namespace

double cider(const TokenSeq& candidate, const std::vector<TokenSeq>& refs,
             const IdfTable& idf, double sigma, CiderVariant variant) {
  if (refs.empty()) throw ValidationError("cider: empty reference list");
  TfIdfProfile cand = build_profile(candidate, idf);
  double total = 0.0;
  for (const TokenSeq& ref : refs) {
    total += cider_against_profile(cand, build_profile(ref, idf), sigma, variant);
  }
  return total / static_cast<double>(refs.size());
}

double per_image_similarity(const TokenSeq& candidate, const std::vector<TokenSeq>& gt_set,
                            const IdfTable& idf) {
  if (gt_set.empty()) throw ValidationError("per_image_similarity: empty GT set");
  double total = 0.0;
  for (const TokenSeq& gt : gt_set) {
    total += cider(candidate, {gt}, idf);
  }
  return total / static_cast<double>(gt_set.size());
}

double cider_btw(const TokenSeq& candidate, const ImageGroup& group,
                 const CaptionDataset& dataset, const IdfTable& idf) {
  if (group.similars.empty()) throw ValidationError("cider_btw: group has no similar images");
  double total = 0.0;
  for (const std::string& id : group.similars) {
    total += per_image_similarity(candidate, dataset.at(id).tokenized, idf);
  }
  return total / static_cast<double>(group.similars.size());
}

int cider_rank(const TokenSeq& candidate, const ImageGroup& group,
               const CaptionDataset& dataset, const IdfTable& idf) {
  double s0 = per_image_similarity(candidate, dataset.at(group.target).tokenized, idf);
  int rank = 1;
  for (const std::string& id : group.similars) {
    double sk = per_image_similarity(candidate, dataset.at(id).tokenized, idf);
    if (sk > s0) ++rank;
  }
  return rank;
}

std::optional<double> dis_word_rate(const TokenSeq& candidate, const WordSet& omega,
                                    const std::vector<TokenSeq>& target_gts) {
  if (target_gts.empty()) throw ValidationError("dis_word_rate: empty GT list");
  WordSet cand_set = word_set({candidate});
  WordSet omega_in_cand;
  std::set_intersection(omega.begin(), omega.end(), cand_set.begin(), cand_set.end(),
                        std::inserter(omega_in_cand, omega_in_cand.begin()));
  std::optional<double> best;
  for (const TokenSeq& gt : target_gts) {
    WordSet gt_set = word_set({gt});
    int denom = 0, numer = 0;
    for (const std::string& w : omega) {
      if (!gt_set.count(w)) continue;
      ++denom;
      if (omega_in_cand.count(w)) ++numer;
    }
    if (denom == 0) continue;  // undefined ratio, reference skipped
    double rate = static_cast<double>(numer) / static_cast<double>(denom);
    if (!best || rate > *best) best = rate;
  }
  return best;
}

double bleu(const std::vector<TokenSeq>& candidates,
            const std::vector<std::vector<TokenSeq>>& refs, int order) {
  if (order < 1 || order > 4) throw ValidationError("bleu order must be in [1,4]");
  if (candidates.size() != refs.size()) {
    throw ValidationError("bleu: " + std::to_string(candidates.size()) + " candidates vs " +
                          std::to_string(refs.size()) + " reference lists");
  }
  std::vector<long long> matched(static_cast<size_t>(order), 0);
  std::vector<long long> guess(static_cast<size_t>(order), 0);
  long long cand_len = 0;
  long long ref_len = 0;
  for (size_t i = 0; i < candidates.size(); ++i) {
    const TokenSeq& cand = candidates[i];
    if (refs[i].empty()) throw ValidationError("bleu: candidate " + std::to_string(i) + " has no references");
    cand_len += static_cast<long long>(cand.size());
    // closest reference length; ties toward the shorter reference
    long long best_ref = static_cast<long long>(refs[i][0].size());
    for (const TokenSeq& ref : refs[i]) {
      long long len = static_cast<long long>(ref.size());
      long long diff = std::llabs(len - static_cast<long long>(cand.size()));
      long long best_diff = std::llabs(best_ref - static_cast<long long>(cand.size()));
      if (diff < best_diff || (diff == best_diff && len < best_ref)) best_ref = len;
    }
    ref_len += best_ref;
    for (int n = 1; n <= order; ++n) {
      NGramCounts cand_grams = ngrams(cand, n);
      std::map<std::string, int> max_ref;
      for (const TokenSeq& ref : refs[i]) {
        for (const auto& [gram, count] : ngrams(ref, n).counts) {
          auto [it, inserted] = max_ref.emplace(gram, count);
          if (!inserted) it->second = std::max(it->second, count);
        }
      }
      for (const auto& [gram, count] : cand_grams.counts) {
        guess[static_cast<size_t>(n - 1)] += count;
        auto it = max_ref.find(gram);
        if (it != max_ref.end()) {
          matched[static_cast<size_t>(n - 1)] += std::min(count, it->second);
        }
      }
    }
  }
  double log_sum = 0.0;
  for (int n = 0; n < order; ++n) {
    if (guess[static_cast<size_t>(n)] == 0 || matched[static_cast<size_t>(n)] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(matched[static_cast<size_t>(n)]) /
                        static_cast<double>(guess[static_cast<size_t>(n)]));
  }
  double score = std::exp(log_sum / static_cast<double>(order));
  if (cand_len <= ref_len) {
    if (cand_len == 0) return 0.0;
    score *= std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len));
  }
  return score;
}

MetricReport corpus_report(const std::map<std::string, TokenSeq>& candidates,
                           const CaptionDataset& dataset,
                           const std::vector<ImageGroup>& groups,
                           const std::map<std::string, WordSet>* omegas,
                           const IdfTable& idf) {
  std::string missing;
  for (const ImageGroup& group : groups) {
    if (!candidates.count(group.target)) missing += (missing.empty() ? "" : ", ") + group.target;
  }
  if (!missing.empty()) throw ValidationError("corpus_report: missing candidates for: " + missing);

  std::vector<const ImageGroup*> ordered;
  ordered.reserve(groups.size());
  for (const ImageGroup& group : groups) ordered.push_back(&group);
  std::sort(ordered.begin(), ordered.end(),
            [](const ImageGroup* a, const ImageGroup* b) { return a->target < b->target; });

  MetricReport report;
  std::vector<TokenSeq> bleu_cands;
  std::vector<std::vector<TokenSeq>> bleu_refs;
  double sum_rank = 0.0, sum_dwr = 0.0;
  int dwr_included = 0;
  for (const ImageGroup* group : ordered) {
    const TokenSeq& cand = candidates.at(group->target);
    const std::vector<TokenSeq>& gts = dataset.at(group->target).tokenized;
    ImageMetrics row;
    row.image_id = group->target;
    row.cider = cider(cand, gts, idf);
    row.cider_btw = cider_btw(cand, *group, dataset, idf);
    row.cider_rank = cider_rank(cand, *group, dataset, idf);
    if (omegas != nullptr) {
      auto it = omegas->find(group->target);
      WordSet omega = it == omegas->end() ? WordSet{} : it->second;
      row.dis_word_rate = dis_word_rate(cand, omega, gts);
      if (row.dis_word_rate) {
        sum_dwr += *row.dis_word_rate;
        ++dwr_included;
      } else {
        ++report.dis_word_rate_excluded;
      }
    }
    for (int n = 1; n <= 4; ++n) {
      row.bleu[static_cast<size_t>(n - 1)] = bleu({cand}, {gts}, n);
    }
    report.mean_cider += row.cider;
    report.mean_cider_btw += row.cider_btw;
    sum_rank += static_cast<double>(row.cider_rank);
    for (size_t n = 0; n < 4; ++n) report.mean_bleu[n] += row.bleu[n];
    bleu_cands.push_back(cand);
    bleu_refs.push_back(gts);
    report.per_image.push_back(std::move(row));
  }
  double count = static_cast<double>(report.per_image.size());
  if (count > 0) {
    report.mean_cider /= count;
    report.mean_cider_btw /= count;
    report.mean_cider_rank = sum_rank / count;
    for (size_t n = 0; n < 4; ++n) {
      report.mean_bleu[n] /= count;
      report.corpus_bleu[n] = bleu(bleu_cands, bleu_refs, static_cast<int>(n) + 1);
    }
  }
  if (dwr_included > 0) report.mean_dis_word_rate = sum_dwr / static_cast<double>(dwr_included);
  return report;
}

}  // namespace discap
