#include "discap/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "discap/errors.hpp"
#include "discap/rng.hpp"

namespace discap {

Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols != b.rows) {
    throw ValidationError("matmul shape mismatch: " + std::to_string(a.rows) + "x" +
                          std::to_string(a.cols) + " * " + std::to_string(b.rows) + "x" +
                          std::to_string(b.cols));
  }
  Mat out(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    for (int k = 0; k < a.cols; ++k) {
      double aik = a.at(i, k);
      if (aik == 0.0) continue;
      for (int j = 0; j < b.cols; ++j) {
        out.at(i, j) += aik * b.at(k, j);
      }
    }
  }
  return out;
}

double dot(std::span<const double> u, std::span<const double> v) {
  double sum = 0.0;
  for (size_t i = 0; i < u.size(); ++i) sum += u[i] * v[i];
  return sum;
}

double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

std::vector<double> softmax(std::span<const double> v) {
  double max_val = -std::numeric_limits<double>::infinity();
  for (double x : v) {
    if (std::isnan(x)) throw ValidationError("softmax: NaN input");
    max_val = std::max(max_val, x);
  }
  std::vector<double> out(v.size());
  double sum = 0.0;
  for (size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - max_val);
    sum += out[i];
  }
  for (double& x : out) x /= sum;
  return out;
}

std::vector<double> layer_norm(std::span<const double> v, std::span<const double> gain,
                               std::span<const double> bias, double eps) {
  size_t n = v.size();
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(n);
  double inv = 1.0 / std::sqrt(var + eps);
  std::vector<double> out(n);
  for (size_t i = 0; i < n; ++i) {
    out[i] = (v[i] - mean) * inv * gain[i] + bias[i];
  }
  return out;
}

double cosine(std::span<const double> u, std::span<const double> v) {
  double nu = norm(u);
  double nv = norm(v);
  if (nu == 0.0 || nv == 0.0) {
    throw ValidationError("cosine: zero vector");
  }
  return dot(u, v) / (nu * nv);
}

namespace {

Mat random_mat(int rows, int cols, Rng& rng) {
  Mat m(rows, cols);
  for (double& x : m.data) x = rng.uniform(-0.1, 0.1);
  return m;
}

std::vector<double> random_vec(int n, Rng& rng) {
  std::vector<double> v(static_cast<size_t>(n));
  for (double& x : v) x = rng.uniform(-0.1, 0.1);
  return v;
}

void check_layer(const Mat& x, const EncoderParams& params, int layer) {
  if (x.cols != params.width) {
    throw ValidationError("encoder input width " + std::to_string(x.cols) +
                          " != model width " + std::to_string(params.width));
  }
  if (layer < 0 || layer >= static_cast<int>(params.layers.size())) {
    throw ValidationError("encoder layer index out of range: " + std::to_string(layer));
  }
  if (params.heads <= 0 || params.width % params.heads != 0) {
    throw ValidationError("head count must divide model width");
  }
}

}  // namespace

EncoderParams EncoderParams::random(int layer_count, int heads, int width, int ffn_width,
                                    uint64_t seed) {
  if (heads <= 0 || width % heads != 0) {
    throw ValidationError("head count must divide model width");
  }
  Rng rng(seed);
  EncoderParams params;
  params.heads = heads;
  params.width = width;
  params.ffn_width = ffn_width;
  params.layers.resize(static_cast<size_t>(layer_count));
  for (auto& layer : params.layers) {
    layer.w_q = random_mat(width, width, rng);
    layer.w_k = random_mat(width, width, rng);
    layer.w_v = random_mat(width, width, rng);
    layer.w_o = random_mat(width, width, rng);
    layer.mlp_w1 = random_mat(width, ffn_width, rng);
    layer.mlp_b1 = random_vec(ffn_width, rng);
    layer.mlp_w2 = random_mat(ffn_width, width, rng);
    layer.mlp_b2 = random_vec(width, rng);
    layer.ln1_gain.assign(static_cast<size_t>(width), 1.0);
    layer.ln1_bias.assign(static_cast<size_t>(width), 0.0);
    layer.ln2_gain.assign(static_cast<size_t>(width), 1.0);
    layer.ln2_bias.assign(static_cast<size_t>(width), 0.0);
  }
  return params;
}

Mat mha_forward(const Mat& x, const EncoderParams& params, int layer) {
  check_layer(x, params, layer);
  const EncoderLayerParams& p = params.layers[static_cast<size_t>(layer)];
  const int n = x.rows;
  const int width = params.width;
  const int heads = params.heads;
  const int head_dim = width / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

  Mat q = matmul(x, p.w_q);
  Mat k = matmul(x, p.w_k);
  Mat v = matmul(x, p.w_v);

  // Split-after-projection heads: head h owns columns [h*head_dim, (h+1)*head_dim).
  Mat concat(n, width);
  std::vector<double> scores(static_cast<size_t>(n));
  for (int h = 0; h < heads; ++h) {
    int off = h * head_dim;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (int d = 0; d < head_dim; ++d) {
          s += q.at(i, off + d) * k.at(j, off + d);
        }
        scores[static_cast<size_t>(j)] = s * scale;
      }
      std::vector<double> weights = softmax(scores);
      for (int d = 0; d < head_dim; ++d) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j) {
          acc += weights[static_cast<size_t>(j)] * v.at(j, off + d);
        }
        concat.at(i, off + d) = acc;
      }
    }
  }
  Mat attended = matmul(concat, p.w_o);

  // Residual + layer norm, MLP, residual + layer norm.
  Mat out(n, width);
  std::vector<double> buf(static_cast<size_t>(width));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < width; ++j) buf[static_cast<size_t>(j)] = x.at(i, j) + attended.at(i, j);
    std::vector<double> o_att = layer_norm(buf, p.ln1_gain, p.ln1_bias);

    std::vector<double> hidden(static_cast<size_t>(params.ffn_width));
    for (int j = 0; j < params.ffn_width; ++j) {
      double s = p.mlp_b1[static_cast<size_t>(j)];
      for (int d = 0; d < width; ++d) s += o_att[static_cast<size_t>(d)] * p.mlp_w1.at(d, j);
      hidden[static_cast<size_t>(j)] = std::max(0.0, s);
    }
    for (int j = 0; j < width; ++j) {
      double s = p.mlp_b2[static_cast<size_t>(j)];
      for (int d = 0; d < params.ffn_width; ++d) s += hidden[static_cast<size_t>(d)] * p.mlp_w2.at(d, j);
      buf[static_cast<size_t>(j)] = o_att[static_cast<size_t>(j)] + s;
    }
    std::vector<double> row = layer_norm(buf, p.ln2_gain, p.ln2_bias);
    for (int j = 0; j < width; ++j) out.at(i, j) = row[static_cast<size_t>(j)];
  }
  return out;
}

Mat encoder_forward(const Mat& x, const EncoderParams& params) {
  Mat current = x;
  for (int layer = 0; layer < static_cast<int>(params.layers.size()); ++layer) {
    current = mha_forward(current, params, layer);
  }
  return current;
}

std::vector<Mat> encoder_forward_layers(const Mat& x, const EncoderParams& params) {
  std::vector<Mat> outputs;
  outputs.reserve(params.layers.size());
  Mat current = x;
  for (int layer = 0; layer < static_cast<int>(params.layers.size()); ++layer) {
    current = mha_forward(current, params, layer);
    outputs.push_back(current);
  }
  return outputs;
}

}  // namespace discap
