#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "discap/distinct.hpp"
#include "discap/gdma.hpp"
#include "discap/metrics.hpp"
#include "discap/rng.hpp"
#include "discap/vocab.hpp"

namespace discap {

// Probabilities are floored at this value inside every log so losses stay
// finite; a term whose probability sits at the floor contributes no gradient.
inline constexpr double kProbFloor = 1e-12;

// Distinctive words resolved to token ids with their relatedness weights.
struct WeightedWords {
  std::vector<std::pair<int, double>> items;  // (token id, lambda)
  int skipped = 0;                            // words missing from the vocabulary
};

WeightedWords map_profile(const DistinctProfile& profile, const Vocab& vocab);

// -sum_t log P_t(w_t). One distribution per supervised token.
double xe_loss(const std::vector<std::vector<double>>& step_probs,
               const std::vector<int>& tokens);

// -sum_t sum_i lambda_i log P_t(omega_i): every distinctive word is pushed
// at every timestep.
double weighted_distinctive_loss(const std::vector<std::vector<double>>& step_probs,
                                 const WeightedWords& words);

// -sum_k lambda_k log P_M[omega_k] over the classifier's multi-label output.
double mem_cls_loss(const std::vector<double>& mem_probs, const WeightedWords& words);

// Mean CIDEr of the sampled caption against the target's GT captions;
// identical code path to per_image_similarity.
double rl_reward(const TokenSeq& sampled, const std::vector<TokenSeq>& target_gts,
                 const IdfTable& idf);

struct LossBreakdown {
  double xe = 0.0, rl = 0.0, dis = 0.0, mem = 0.0;
  double alpha_c = 0.0, alpha_r = 0.0, alpha_d = 0.0, alpha_m = 0.0;
  double total = 0.0;
};

// Stage 1: (alpha_c, alpha_r) = (1, 0) with base loss xe; stage 2: (0, 1)
// with base loss rl. alpha_d and alpha_m are set per batch so their terms
// equal one quarter of the base loss magnitude; zero when their loss is 0.
LossBreakdown combine(double xe, double rl, double dis, double mem, int stage);

// ---- Forward cache and hand-derived gradients -----------------------------

struct DecoderStepCache {
  int prev_token = 0;
  std::vector<double> attn;    // cross-attention weights over memory rows
  std::vector<double> hidden;  // embed(prev) + context
  std::vector<double> probs;   // P_t over vocab+1
};

// Everything needed to backpropagate one target role: GDMA state from the
// difference memory onward plus teacher-forced decoder steps and the
// classifier output. D is an input here; it does not depend on omega/bias.
struct TargetForward {
  Mat diff0;
  std::vector<double> dscores;  // D
  CaptionMode mode = CaptionMode::kDistinctive;
  double omega = 1.0, bias = 0.5;
  std::vector<double> attention;  // A
  Mat weighted;                   // M'_0
  std::vector<int> gt_tokens;     // supervision, one per step
  std::vector<DecoderStepCache> steps;
  std::vector<double> pooled;     // classifier mean-pool input
  std::vector<double> mem_probs;  // P_M
};

TargetForward forward_target(const Mat& diff0, const std::vector<double>& dscores,
                             CaptionMode mode, double omega, double bias,
                             const std::vector<int>& gt_tokens,
                             const ToyDecoderParams& dec,
                             const MemoryClassifierParams& cls);

struct ParamGradients {
  double omega = 0.0, bias = 0.0;
  Mat embed, w_out;
  std::vector<double> b_out;
  Mat w_mc;
  std::vector<double> b_mc;

  static ParamGradients zeros_like(const ToyDecoderParams& dec,
                                   const MemoryClassifierParams& cls);
  void accumulate(const ParamGradients& other);
  void scale(double factor);
};

// Chain-rule gradients of w_xe*L_xe + w_d*L_d + w_m*L_m with respect to
// {omega, bias, classifier, decoder}. A = omega*D + bias with D constant, so
// dA/d(omega) = D and dA/d(bias) = 1; everything downstream of M'_0 = A ⊙ M~_0
// is backpropagated through the decoder attention and the classifier pool.
ParamGradients analytic_gradients(const TargetForward& fwd, const WeightedWords& words,
                                  double w_xe, double w_d, double w_m,
                                  const ToyDecoderParams& dec,
                                  const MemoryClassifierParams& cls);

// Argmax rollout from the start marker; stops at the marker or max_len.
std::vector<int> greedy_decode(const Mat& weighted, const ToyDecoderParams& dec, int max_len);

// REINFORCE with greedy baseline: advantage = reward(sampled) - reward(greedy),
// gradient = advantage * d(-log p(sampled))/d(decoder params). Zero when the
// sampled rollout equals the greedy one.
struct ScstOutcome {
  std::vector<int> sampled;
  std::vector<int> greedy;
  double sampled_reward = 0.0;
  double greedy_reward = 0.0;
  double advantage = 0.0;
  ParamGradients grads;  // decoder fields only
};

ScstOutcome scst_step(const Mat& weighted, const ToyDecoderParams& dec,
                      const std::vector<TokenSeq>& target_gts, const IdfTable& idf,
                      const Vocab& vocab, Rng& rng, int max_len);

// ---- Finite-difference verification ---------------------------------------

struct GradCheckResult {
  double err_omega = 0.0, err_bias = 0.0, err_classifier = 0.0, err_decoder = 0.0;
  double worst = 0.0;
  bool pass = false;
};

// One seeded random instance (N_0 <= 8, d_m <= 16, vocab <= 20): analytic
// gradients of L_xe + L_d + L_m vs central differences with h = 1e-5;
// passes when every coordinate's relative error is below 1e-4.
GradCheckResult gradient_check_instance(uint64_t seed);

// Multi-instance pass/fail table, deterministic per seed.
std::string gradcheck_report(uint64_t seed, int instances);

// ---- Toy training loop -----------------------------------------------------

struct ToyTask {
  CaptionDataset dataset;
  std::map<std::string, Mat> features;
  std::vector<ImageGroup> groups;
  Vocab vocab;
  std::map<std::string, std::string> planted_word;  // empty for file-loaded tasks
  std::map<std::string, int> planted_region;
};

// Synthetic planted-distinctive task: every image carries one unique region
// feature and a caption [planted word, shared word, group word]; the other
// regions are shared across its group.
ToyTask make_planted_task(int n_groups, int group_size, int vocab_size, int d_m,
                          int regions, uint64_t seed);

struct ToyConfig {
  int k_similar = 5;
  uint64_t seed = 0;
  int steps = 300;
  double learning_rate = 0.05;
  int d_m = 16;
  int heads = 2;
  int layers = 1;
  int ffn = 32;
  int vocab = 30;
  int stage = 1;
  std::string indicator = "threshold";  // "median" | "threshold"
  double tau = std::numeric_limits<double>::infinity();
  int n_groups = 3;
  int regions = 4;
  int max_decode_len = 8;
  // Optional data files; when empty a planted task is synthesized.
  std::string features_path, captions_path, groups_path;
};

struct TrainLogEntry {
  int step = 0;
  double xe = 0.0, dis = 0.0, mem = 0.0, rl = 0.0, total = 0.0;
  double omega = 0.0, bias = 0.0;
};

struct TrainState {
  double omega = 1.0, bias = 0.5;
  EncoderParams encoder;  // frozen
  ToyDecoderParams decoder;
  MemoryClassifierParams classifier;
  int step = 0;
  uint64_t seed = 0;
};

struct TrainResult {
  TrainState state;
  std::vector<TrainLogEntry> log;
  ToyTask task;
  IdfTable idf;
};

// Seeded random parameters: frozen encoder, decoder, classifier, and the
// attention scalars at omega = 1, bias = 0.5.
TrainState fresh_state(int d_m, int heads, int layers, int ffn, int vocab, uint64_t seed);

// Algorithm-style loop: per group, encode solo + union once (the encoder is
// frozen), then per target role compute distinctive attention per indicated
// caption, decode, classify, combine the four losses, and apply plain SGD to
// {omega, bias, classifier, decoder}. Aborts on a non-finite loss, naming
// the step.
TrainResult train_toy_on(const ToyTask& task, const ToyConfig& config);

// Synthesizes the planted task from the config, then trains on it.
TrainResult train_toy(const ToyConfig& config);

// Post-training rollouts of every group target with distinctive attention.
std::map<std::string, TokenSeq> greedy_captions(const TrainResult& result, int max_len);

}  // namespace discap
