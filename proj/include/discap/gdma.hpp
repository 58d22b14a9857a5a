#pragma once

#include <vector>

#include "discap/tensor.hpp"

namespace discap {

// Encode one image's region features into memory vectors (full encoder
// stack); row count is preserved.
Mat encode(const Mat& features, const EncoderParams& params);

// Encode the row-concatenation of a group's features jointly, then split the
// union memory back into per-image segments of the original row counts.
std::vector<Mat> encode_union(const std::vector<Mat>& group_features,
                              const EncoderParams& params);

// Elementwise difference between a solo memory and its union segment.
Mat memory_difference(const Mat& memory, const Mat& union_segment);

// Per-image solo memories, union segments, and differences for one group,
// indexed like the input features (target first by convention).
struct MemoryBank {
  std::vector<Mat> solo;
  std::vector<Mat> union_segment;
  std::vector<Mat> diff;
};

MemoryBank build_memory_bank(const std::vector<Mat>& group_features,
                             const EncoderParams& params);

// Per-layer variant: one bank per encoder layer, so attention can be applied
// to every layer's memory rather than only the final one. The last bank
// matches build_memory_bank exactly.
std::vector<MemoryBank> build_memory_banks_per_layer(const std::vector<Mat>& group_features,
                                                     const EncoderParams& params);

// R_k: cosine similarity of every similar-image difference row against every
// target difference row, N_k x N_0. Zero rows get similarity 0.
Mat similarity_matrix(const Mat& diff_k, const Mat& diff_0);

// R~_k: columnwise max of R_k, the best matching region of image k per
// target region.
std::vector<double> object_image_similarity(const Mat& similarity);

struct DistinctivenessScores {
  std::vector<double> raw;         // d_j = -(1/K) sum_k R~_k[j]
  std::vector<double> normalized;  // D = softmax(d)
};

DistinctivenessScores distinctiveness_scores(
    const std::vector<std::vector<double>>& similarity_maps);

enum class CaptionMode { kDistinctive, kCommon };

// A = omega * D + bias in distinctive mode; the all-ones vector in common
// mode. omega and bias are clipped nonnegative at update time.
std::vector<double> distinctive_attention(const std::vector<double>& scores, double omega,
                                          double bias, CaptionMode mode);

// Row j of the result is attention[j] * diff_0 row j.
Mat weight_memory(const Mat& diff_0, const std::vector<double>& attention);

// Everything the attention pipeline produces for one target, kept for
// inspection dumps.
struct AttentionState {
  std::vector<Mat> similarity;                         // R_k per similar image
  std::vector<std::vector<double>> object_similarity;  // R~_k per similar image
  DistinctivenessScores scores;
  std::vector<double> attention;
  Mat weighted;  // M'_0
};

// Full pipeline from a memory bank for the image at target_index.
AttentionState run_attention(const MemoryBank& bank, size_t target_index, double omega,
                             double bias, CaptionMode mode);

// Mean-pool -> linear -> sigmoid over the vocabulary: independent
// multi-label probabilities, not a distribution.
struct MemoryClassifierParams {
  Mat w;                        // vocab x d_m
  std::vector<double> b;        // vocab
};

std::vector<double> classify_memory(const Mat& weighted, const MemoryClassifierParams& params);

// Single-step decoder: embed the previous token, cross-attend over the
// weighted memory rows, add, project to logits, softmax. Token id
// embed.rows-1 is the shared start/end marker; the output distribution
// covers the vocabulary plus that marker.
struct ToyDecoderParams {
  Mat embed;                    // (vocab+1) x d_m
  Mat w_out;                    // (vocab+1) x d_m
  std::vector<double> b_out;    // vocab+1

  int vocab_size() const { return embed.rows - 1; }
  int marker_token() const { return embed.rows - 1; }
};

std::vector<double> toy_decoder_step(const Mat& weighted_memory, int prev_token,
                                     const ToyDecoderParams& params);

}  // namespace discap
