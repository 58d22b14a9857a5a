#include "discap/gdma.hpp"

#include <cmath>
#include <string>

#include "discap/errors.hpp"

namespace discap {

Mat encode(const Mat& features, const EncoderParams& params) {
  return encoder_forward(features, params);
}

std::vector<Mat> encode_union(const std::vector<Mat>& group_features,
                              const EncoderParams& params) {
  if (group_features.empty()) throw ValidationError("encode_union: empty group");
  int total_rows = 0;
  for (const Mat& x : group_features) {
    if (x.cols != group_features[0].cols) {
      throw ValidationError("encode_union: images disagree on feature width");
    }
    total_rows += x.rows;
  }
  Mat stacked(total_rows, group_features[0].cols);
  int row = 0;
  for (const Mat& x : group_features) {
    std::copy(x.data.begin(), x.data.end(), stacked.data.begin() + static_cast<size_t>(row) * stacked.cols);
    row += x.rows;
  }
  Mat encoded = encoder_forward(stacked, params);
  std::vector<Mat> segments;
  segments.reserve(group_features.size());
  row = 0;
  for (const Mat& x : group_features) {
    Mat segment(x.rows, encoded.cols);
    std::copy(encoded.data.begin() + static_cast<size_t>(row) * encoded.cols,
              encoded.data.begin() + static_cast<size_t>(row + x.rows) * encoded.cols,
              segment.data.begin());
    segments.push_back(std::move(segment));
    row += x.rows;
  }
  return segments;
}

Mat memory_difference(const Mat& memory, const Mat& union_segment) {
  if (!memory.same_shape(union_segment)) {
    throw ValidationError("memory_difference: shape mismatch");
  }
  Mat diff = memory;
  for (size_t i = 0; i < diff.data.size(); ++i) diff.data[i] -= union_segment.data[i];
  return diff;
}

MemoryBank build_memory_bank(const std::vector<Mat>& group_features,
                             const EncoderParams& params) {
  MemoryBank bank;
  bank.solo.reserve(group_features.size());
  for (const Mat& x : group_features) bank.solo.push_back(encode(x, params));
  bank.union_segment = encode_union(group_features, params);
  bank.diff.reserve(group_features.size());
  for (size_t k = 0; k < group_features.size(); ++k) {
    bank.diff.push_back(memory_difference(bank.solo[k], bank.union_segment[k]));
  }
  return bank;
}

std::vector<MemoryBank> build_memory_banks_per_layer(const std::vector<Mat>& group_features,
                                                     const EncoderParams& params) {
  if (group_features.empty()) throw ValidationError("build_memory_banks_per_layer: empty group");
  size_t layer_count = params.layers.size();
  std::vector<MemoryBank> banks(layer_count);

  for (const Mat& x : group_features) {
    std::vector<Mat> outputs = encoder_forward_layers(x, params);
    for (size_t l = 0; l < layer_count; ++l) banks[l].solo.push_back(std::move(outputs[l]));
  }

  int total_rows = 0;
  for (const Mat& x : group_features) total_rows += x.rows;
  Mat stacked(total_rows, group_features[0].cols);
  int row = 0;
  for (const Mat& x : group_features) {
    std::copy(x.data.begin(), x.data.end(),
              stacked.data.begin() + static_cast<size_t>(row) * stacked.cols);
    row += x.rows;
  }
  std::vector<Mat> joint_layers = encoder_forward_layers(stacked, params);
  for (size_t l = 0; l < layer_count; ++l) {
    const Mat& joint = joint_layers[l];
    row = 0;
    for (const Mat& x : group_features) {
      Mat segment(x.rows, joint.cols);
      std::copy(joint.data.begin() + static_cast<size_t>(row) * joint.cols,
                joint.data.begin() + static_cast<size_t>(row + x.rows) * joint.cols,
                segment.data.begin());
      banks[l].union_segment.push_back(std::move(segment));
      row += x.rows;
    }
    for (size_t k = 0; k < group_features.size(); ++k) {
      banks[l].diff.push_back(memory_difference(banks[l].solo[k], banks[l].union_segment[k]));
    }
  }
  return banks;
}

Mat similarity_matrix(const Mat& diff_k, const Mat& diff_0) {
  if (diff_k.cols != diff_0.cols) throw ValidationError("similarity_matrix: width mismatch");
  std::vector<double> norms_k(static_cast<size_t>(diff_k.rows));
  std::vector<double> norms_0(static_cast<size_t>(diff_0.rows));
  for (int i = 0; i < diff_k.rows; ++i) norms_k[static_cast<size_t>(i)] = norm(diff_k.row(i));
  for (int j = 0; j < diff_0.rows; ++j) norms_0[static_cast<size_t>(j)] = norm(diff_0.row(j));
  Mat r(diff_k.rows, diff_0.rows);
  for (int i = 0; i < diff_k.rows; ++i) {
    for (int j = 0; j < diff_0.rows; ++j) {
      double denom = norms_k[static_cast<size_t>(i)] * norms_0[static_cast<size_t>(j)];
      // zero memory rows (M~ can vanish) compare as similarity 0
      r.at(i, j) = denom == 0.0 ? 0.0 : dot(diff_k.row(i), diff_0.row(j)) / denom;
    }
  }
  return r;
}

std::vector<double> object_image_similarity(const Mat& similarity) {
  if (similarity.rows == 0 || similarity.cols == 0) {
    throw ValidationError("object_image_similarity: empty matrix");
  }
  std::vector<double> best(static_cast<size_t>(similarity.cols));
  for (int j = 0; j < similarity.cols; ++j) {
    double m = similarity.at(0, j);
    for (int i = 1; i < similarity.rows; ++i) m = std::max(m, similarity.at(i, j));
    best[static_cast<size_t>(j)] = m;
  }
  return best;
}

DistinctivenessScores distinctiveness_scores(
    const std::vector<std::vector<double>>& similarity_maps) {
  if (similarity_maps.empty()) throw ValidationError("distinctiveness_scores: K must be >= 1");
  size_t n0 = similarity_maps[0].size();
  for (const auto& map : similarity_maps) {
    if (map.size() != n0) throw ValidationError("distinctiveness_scores: map length mismatch");
  }
  DistinctivenessScores result;
  result.raw.assign(n0, 0.0);
  for (const auto& map : similarity_maps) {
    for (size_t j = 0; j < n0; ++j) result.raw[j] += map[j];
  }
  double inv_k = -1.0 / static_cast<double>(similarity_maps.size());
  for (double& d : result.raw) d *= inv_k;
  result.normalized = softmax(result.raw);
  return result;
}

std::vector<double> distinctive_attention(const std::vector<double>& scores, double omega,
                                          double bias, CaptionMode mode) {
  if (mode == CaptionMode::kCommon) {
    return std::vector<double>(scores.size(), 1.0);
  }
  if (omega < 0.0 || bias < 0.0) {
    throw ValidationError("distinctive_attention: omega and bias must be nonnegative");
  }
  std::vector<double> attention(scores.size());
  for (size_t j = 0; j < scores.size(); ++j) attention[j] = omega * scores[j] + bias;
  return attention;
}

Mat weight_memory(const Mat& diff_0, const std::vector<double>& attention) {
  if (static_cast<int>(attention.size()) != diff_0.rows) {
    throw ValidationError("weight_memory: attention length " + std::to_string(attention.size()) +
                          " != row count " + std::to_string(diff_0.rows));
  }
  Mat weighted = diff_0;
  for (int i = 0; i < weighted.rows; ++i) {
    for (int j = 0; j < weighted.cols; ++j) weighted.at(i, j) *= attention[static_cast<size_t>(i)];
  }
  return weighted;
}

AttentionState run_attention(const MemoryBank& bank, size_t target_index, double omega,
                             double bias, CaptionMode mode) {
  if (target_index >= bank.diff.size()) {
    throw ValidationError("run_attention: target index out of range");
  }
  AttentionState state;
  const Mat& target_diff = bank.diff[target_index];
  for (size_t k = 0; k < bank.diff.size(); ++k) {
    if (k == target_index) continue;
    state.similarity.push_back(similarity_matrix(bank.diff[k], target_diff));
    state.object_similarity.push_back(object_image_similarity(state.similarity.back()));
  }
  if (state.object_similarity.empty()) {
    // K = 0 degenerate group: the difference memory is all-zero and every
    // region is equally (un)distinctive.
    state.scores.raw.assign(static_cast<size_t>(target_diff.rows), 0.0);
    state.scores.normalized = softmax(state.scores.raw);
  } else {
    state.scores = distinctiveness_scores(state.object_similarity);
  }
  state.attention = distinctive_attention(state.scores.normalized, omega, bias, mode);
  state.weighted = weight_memory(target_diff, state.attention);
  return state;
}

std::vector<double> classify_memory(const Mat& weighted, const MemoryClassifierParams& params) {
  if (params.w.cols != weighted.cols) {
    throw ValidationError("classify_memory: classifier input width " + std::to_string(params.w.cols) +
                          " != memory width " + std::to_string(weighted.cols));
  }
  std::vector<double> pooled(static_cast<size_t>(weighted.cols), 0.0);
  for (int i = 0; i < weighted.rows; ++i) {
    for (int j = 0; j < weighted.cols; ++j) pooled[static_cast<size_t>(j)] += weighted.at(i, j);
  }
  for (double& x : pooled) x /= static_cast<double>(weighted.rows);
  std::vector<double> probs(static_cast<size_t>(params.w.rows));
  for (int v = 0; v < params.w.rows; ++v) {
    double z = params.b[static_cast<size_t>(v)] + dot(params.w.row(v), pooled);
    probs[static_cast<size_t>(v)] = 1.0 / (1.0 + std::exp(-z));
  }
  return probs;
}

std::vector<double> toy_decoder_step(const Mat& weighted_memory, int prev_token,
                                     const ToyDecoderParams& params) {
  if (prev_token < 0 || prev_token >= params.embed.rows) {
    throw ValidationError("toy_decoder_step: unknown token id " + std::to_string(prev_token));
  }
  if (params.embed.cols != weighted_memory.cols) {
    throw ValidationError("toy_decoder_step: embedding width != memory width");
  }
  std::span<const double> e = params.embed.row(prev_token);
  double scale = 1.0 / std::sqrt(static_cast<double>(weighted_memory.cols));
  std::vector<double> scores(static_cast<size_t>(weighted_memory.rows));
  for (int i = 0; i < weighted_memory.rows; ++i) {
    scores[static_cast<size_t>(i)] = dot(e, weighted_memory.row(i)) * scale;
  }
  std::vector<double> weights = softmax(scores);
  std::vector<double> hidden(e.begin(), e.end());
  for (int i = 0; i < weighted_memory.rows; ++i) {
    double w = weights[static_cast<size_t>(i)];
    std::span<const double> row = weighted_memory.row(i);
    for (size_t j = 0; j < hidden.size(); ++j) hidden[j] += w * row[j];
  }
  std::vector<double> logits(static_cast<size_t>(params.w_out.rows));
  for (int v = 0; v < params.w_out.rows; ++v) {
    logits[static_cast<size_t>(v)] = params.b_out[static_cast<size_t>(v)] + dot(params.w_out.row(v), hidden);
  }
  return softmax(logits);
}

}  // namespace discap
