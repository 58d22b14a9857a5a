#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace discap {

// Dense row-major matrix of 64-bit floats. Row count varies per image
// (regions), so extents are plain runtime values.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

  double& at(int i, int j) { return data[static_cast<size_t>(i) * cols + j]; }
  double at(int i, int j) const { return data[static_cast<size_t>(i) * cols + j]; }

  std::span<double> row(int i) { return {data.data() + static_cast<size_t>(i) * cols, static_cast<size_t>(cols)}; }
  std::span<const double> row(int i) const { return {data.data() + static_cast<size_t>(i) * cols, static_cast<size_t>(cols)}; }

  bool same_shape(const Mat& other) const { return rows == other.rows && cols == other.cols; }
};

Mat matmul(const Mat& a, const Mat& b);
double dot(std::span<const double> u, std::span<const double> v);
double norm(std::span<const double> v);

// Numerically stable softmax (max subtraction). Rejects NaN input.
std::vector<double> softmax(std::span<const double> v);

// Per-vector normalization to zero mean / unit variance, then affine.
std::vector<double> layer_norm(std::span<const double> v,
                               std::span<const double> gain,
                               std::span<const double> bias,
                               double eps = 1e-5);

// dot(u,v) / (|u||v|). Both vectors must be nonzero; callers that can see
// zero vectors guard before calling.
double cosine(std::span<const double> u, std::span<const double> v);

struct EncoderLayerParams {
  Mat w_q, w_k, w_v, w_o;              // width x width
  Mat mlp_w1;                          // width x ffn_width
  std::vector<double> mlp_b1;          // ffn_width
  Mat mlp_w2;                          // ffn_width x width
  std::vector<double> mlp_b2;          // width
  std::vector<double> ln1_gain, ln1_bias;
  std::vector<double> ln2_gain, ln2_bias;
};

// Self-attention encoder stack: per layer, multi-head attention with
// residual + layer norm, then a two-layer ReLU MLP with residual + layer
// norm. No positional encoding: rows are an unordered set of regions.
struct EncoderParams {
  int heads = 2;
  int width = 16;        // model width d_m
  int ffn_width = 32;
  std::vector<EncoderLayerParams> layers;

  // Seeded uniform(-0.1, 0.1) weights, unit layer-norm gains, zero biases.
  static EncoderParams random(int layer_count, int heads, int width, int ffn_width,
                              uint64_t seed);
};

// One encoder layer forward pass; output has the same row count as x.
Mat mha_forward(const Mat& x, const EncoderParams& params, int layer);

// Full stack.
Mat encoder_forward(const Mat& x, const EncoderParams& params);

// Output of every layer, in order; the last entry equals encoder_forward.
std::vector<Mat> encoder_forward_layers(const Mat& x, const EncoderParams& params);

}  // namespace discap
