#include <doctest.h>

#include <cmath>

#include "discap/errors.hpp"
#include "discap/rng.hpp"
#include "discap/tensor.hpp"

using namespace discap;

namespace {

Mat random_mat(int rows, int cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Mat m(rows, cols);
  for (double& x : m.data) x = rng.uniform(lo, hi);
  return m;
}

}  // namespace

TEST_CASE("softmax basics") {
  std::vector<double> equal{2.0, 2.0, 2.0, 2.0};
  for (double p : softmax(equal)) CHECK(p == doctest::Approx(0.25).epsilon(1e-12));

  std::vector<double> pair{0.0, std::log(3.0)};
  std::vector<double> out = softmax(pair);
  CHECK(out[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(out[1] == doctest::Approx(0.75).epsilon(1e-12));

  std::vector<double> shifted{1000.0, 1000.0 + std::log(3.0)};
  std::vector<double> out2 = softmax(shifted);
  CHECK(out2[0] == doctest::Approx(out[0]).epsilon(1e-12));
  CHECK(out2[1] == doctest::Approx(out[1]).epsilon(1e-12));

  std::vector<double> bad{0.0, std::nan("")};
  CHECK_THROWS_AS(softmax(bad), ValidationError);
}

TEST_CASE("softmax sums to one and is monotone") {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> v(1 + rng.below(10));
    for (double& x : v) x = rng.uniform(-30.0, 30.0);
    std::vector<double> p = softmax(v);
    double sum = 0.0;
    for (double x : p) {
      CHECK(x > 0.0);
      sum += x;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    for (size_t i = 0; i < v.size(); ++i) {
      for (size_t j = 0; j < v.size(); ++j) {
        if (v[i] > v[j]) CHECK(p[i] > p[j]);
      }
    }
  }
}

TEST_CASE("layer_norm matches direct recomputation") {
  Rng rng(5);
  std::vector<double> gain(8), bias(8), v(8);
  for (int trial = 0; trial < 50; ++trial) {
    for (double& x : gain) x = rng.uniform(0.5, 2.0);
    for (double& x : bias) x = rng.uniform(-1.0, 1.0);
    for (double& x : v) x = rng.uniform(-5.0, 5.0);
    std::vector<double> out = layer_norm(v, gain, bias);
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= 8.0;
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= 8.0;
    for (size_t i = 0; i < v.size(); ++i) {
      double expected = (v[i] - mean) / std::sqrt(var + 1e-5) * gain[i] + bias[i];
      CHECK(out[i] == doctest::Approx(expected).epsilon(1e-12));
    }
  }
}

TEST_CASE("layer_norm unit gain gives zero mean unit variance") {
  std::vector<double> gain(6, 1.0), bias(6, 0.0);
  std::vector<double> v{3.0, -1.0, 4.0, 1.0, -5.0, 9.0};
  std::vector<double> out = layer_norm(v, gain, bias);
  double mean = 0.0, var = 0.0;
  for (double x : out) mean += x;
  mean /= 6.0;
  for (double x : out) var += (x - mean) * (x - mean);
  var /= 6.0;
  CHECK(mean == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(var == doctest::Approx(1.0).epsilon(1e-3));  // eps shifts variance slightly

  std::vector<double> constant(6, 2.5);
  std::vector<double> b{1.0, 2.0, 3.0, 4.0, 5.0, 6.0};
  std::vector<double> collapsed = layer_norm(constant, gain, b);
  for (size_t i = 0; i < b.size(); ++i) CHECK(collapsed[i] == doctest::Approx(b[i]).epsilon(1e-12));
}

TEST_CASE("cosine identities") {
  std::vector<double> v{1.0, 2.0, -3.0};
  CHECK(cosine(v, v) == doctest::Approx(1.0).epsilon(1e-12));
  std::vector<double> x{1.0, 0.0}, y{0.0, 1.0};
  CHECK(cosine(x, y) == doctest::Approx(0.0));
  std::vector<double> u{0.5, -1.5, 2.0};
  std::vector<double> w{1.0, 0.25, -0.75};
  std::vector<double> u2 = u, w2 = w;
  for (double& a : u2) a *= 3.0;
  for (double& a : w2) a *= 0.125;
  CHECK(cosine(u2, w2) == doctest::Approx(cosine(u, w)).epsilon(1e-12));
  std::vector<double> zero{0.0, 0.0, 0.0};
  CHECK_THROWS_AS(cosine(zero, v), ValidationError);
}

namespace {

// Independent single-head dense recomputation for heads=1 configurations.
Mat reference_encoder_layer(const Mat& x, const EncoderLayerParams& p, int ffn_width) {
  int n = x.rows, d = x.cols;
  Mat q = matmul(x, p.w_q), k = matmul(x, p.w_k), v = matmul(x, p.w_v);
  Mat ctx(n, d);
  for (int i = 0; i < n; ++i) {
    std::vector<double> scores(static_cast<size_t>(n));
    for (int j = 0; j < n; ++j) scores[static_cast<size_t>(j)] = dot(q.row(i), k.row(j)) / std::sqrt(static_cast<double>(d));
    std::vector<double> w = softmax(scores);
    for (int c = 0; c < d; ++c) {
      double acc = 0.0;
      for (int j = 0; j < n; ++j) acc += w[static_cast<size_t>(j)] * v.at(j, c);
      ctx.at(i, c) = acc;
    }
  }
  Mat attended = matmul(ctx, p.w_o);
  Mat out(n, d);
  for (int i = 0; i < n; ++i) {
    std::vector<double> sum(static_cast<size_t>(d));
    for (int c = 0; c < d; ++c) sum[static_cast<size_t>(c)] = x.at(i, c) + attended.at(i, c);
    std::vector<double> o_att = layer_norm(sum, p.ln1_gain, p.ln1_bias);
    std::vector<double> hidden(static_cast<size_t>(ffn_width));
    for (int h = 0; h < ffn_width; ++h) {
      double s = p.mlp_b1[static_cast<size_t>(h)];
      for (int c = 0; c < d; ++c) s += o_att[static_cast<size_t>(c)] * p.mlp_w1.at(c, h);
      hidden[static_cast<size_t>(h)] = s > 0.0 ? s : 0.0;
    }
    std::vector<double> mlp_out(static_cast<size_t>(d));
    for (int c = 0; c < d; ++c) {
      double s = p.mlp_b2[static_cast<size_t>(c)];
      for (int h = 0; h < ffn_width; ++h) s += hidden[static_cast<size_t>(h)] * p.mlp_w2.at(h, c);
      mlp_out[static_cast<size_t>(c)] = o_att[static_cast<size_t>(c)] + s;
    }
    std::vector<double> row = layer_norm(mlp_out, p.ln2_gain, p.ln2_bias);
    for (int c = 0; c < d; ++c) out.at(i, c) = row[static_cast<size_t>(c)];
  }
  return out;
}

}  // namespace

TEST_CASE("mha_forward matches dense recomputation for one head") {
  Rng rng(21);
  EncoderParams params = EncoderParams::random(1, 1, 4, 6, 99);
  Mat x = random_mat(3, 4, rng);
  Mat got = mha_forward(x, params, 0);
  Mat want = reference_encoder_layer(x, params.layers[0], params.ffn_width);
  REQUIRE(got.same_shape(want));
  for (size_t i = 0; i < got.data.size(); ++i) {
    CHECK(got.data[i] == doctest::Approx(want.data[i]).epsilon(1e-12));
  }
}

TEST_CASE("single row attends only to itself") {
  // One token: the attention weight is 1, so the context is the value row
  // itself; cross-check against the dense reference.
  Rng rng(2);
  EncoderParams params = EncoderParams::random(1, 1, 4, 6, 5);
  Mat x = random_mat(1, 4, rng);
  Mat got = mha_forward(x, params, 0);
  Mat want = reference_encoder_layer(x, params.layers[0], params.ffn_width);
  for (size_t i = 0; i < got.data.size(); ++i) {
    CHECK(got.data[i] == doctest::Approx(want.data[i]).epsilon(1e-12));
  }
}

TEST_CASE("mha_forward is permutation-equivariant over rows") {
  Rng rng(23);
  EncoderParams params = EncoderParams::random(2, 2, 8, 12, 17);
  Mat x = random_mat(5, 8, rng);
  Mat y = encoder_forward(x, params);
  std::vector<int> perm{3, 0, 4, 1, 2};
  Mat xp(5, 8);
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 8; ++j) xp.at(i, j) = x.at(perm[static_cast<size_t>(i)], j);
  }
  Mat yp = encoder_forward(xp, params);
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 8; ++j) {
      CHECK(yp.at(i, j) == doctest::Approx(y.at(perm[static_cast<size_t>(i)], j)).epsilon(1e-12));
    }
  }
}

TEST_CASE("duplicate rows stay duplicates") {
  Rng rng(29);
  EncoderParams params = EncoderParams::random(1, 2, 6, 8, 31);
  Mat x = random_mat(4, 6, rng);
  for (int j = 0; j < 6; ++j) x.at(3, j) = x.at(1, j);
  Mat y = mha_forward(x, params, 0);
  for (int j = 0; j < 6; ++j) CHECK(y.at(3, j) == y.at(1, j));
}

TEST_CASE("forward passes are deterministic and finite") {
  Rng rng(31);
  EncoderParams params = EncoderParams::random(2, 2, 8, 16, 41);
  Mat x = random_mat(6, 8, rng);
  Mat a = encoder_forward(x, params);
  Mat b = encoder_forward(x, params);
  CHECK(a.data == b.data);
  for (double v : a.data) CHECK(std::isfinite(v));
}

TEST_CASE("mha_forward rejects shape mismatch") {
  EncoderParams params = EncoderParams::random(1, 2, 8, 8, 1);
  Mat x(2, 6);
  CHECK_THROWS_AS(mha_forward(x, params, 0), ValidationError);
  Mat ok(2, 8);
  CHECK_THROWS_AS(mha_forward(ok, params, 3), ValidationError);
}
