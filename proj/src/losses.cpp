#include "discap/losses.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "discap/errors.hpp"

namespace discap {

WeightedWords map_profile(const DistinctProfile& profile, const Vocab& vocab) {
  WeightedWords words;
  for (const std::string& word : profile.omega) {
    if (!vocab.contains(word)) {
      ++words.skipped;
      continue;
    }
    auto it = profile.weights.find(word);
    double lambda = it == profile.weights.end() ? 1.0 : it->second;
    words.items.emplace_back(vocab.id(word), lambda);
  }
  return words;
}

double xe_loss(const std::vector<std::vector<double>>& step_probs,
               const std::vector<int>& tokens) {
  if (step_probs.size() != tokens.size()) {
    throw ValidationError("xe_loss: " + std::to_string(step_probs.size()) +
                          " distributions vs " + std::to_string(tokens.size()) + " tokens");
  }
  double loss = 0.0;
  for (size_t t = 0; t < tokens.size(); ++t) {
    int token = tokens[t];
    if (token < 0 || token >= static_cast<int>(step_probs[t].size())) {
      throw ValidationError("xe_loss: token id out of range at step " + std::to_string(t));
    }
    loss -= std::log(std::max(step_probs[t][static_cast<size_t>(token)], kProbFloor));
  }
  return loss;
}

double weighted_distinctive_loss(const std::vector<std::vector<double>>& step_probs,
                                 const WeightedWords& words) {
  double loss = 0.0;
  for (const auto& probs : step_probs) {
    for (const auto& [id, lambda] : words.items) {
      loss -= lambda * std::log(std::max(probs[static_cast<size_t>(id)], kProbFloor));
    }
  }
  return loss;
}

double mem_cls_loss(const std::vector<double>& mem_probs, const WeightedWords& words) {
  double loss = 0.0;
  for (const auto& [id, lambda] : words.items) {
    if (id >= static_cast<int>(mem_probs.size())) {
      throw ValidationError("mem_cls_loss: word id outside classifier output");
    }
    loss -= lambda * std::log(std::max(mem_probs[static_cast<size_t>(id)], kProbFloor));
  }
  return loss;
}

double rl_reward(const TokenSeq& sampled, const std::vector<TokenSeq>& target_gts,
                 const IdfTable& idf) {
  return per_image_similarity(sampled, target_gts, idf);
}

LossBreakdown combine(double xe, double rl, double dis, double mem, int stage) {
  if (stage != 1 && stage != 2) throw ValidationError("combine: stage must be 1 or 2");
  for (double v : {xe, rl, dis, mem}) {
    if (!std::isfinite(v)) throw ValidationError("combine: non-finite loss component");
  }
  LossBreakdown out;
  out.xe = xe;
  out.rl = rl;
  out.dis = dis;
  out.mem = mem;
  out.alpha_c = stage == 1 ? 1.0 : 0.0;
  out.alpha_r = stage == 1 ? 0.0 : 1.0;
  double base = std::fabs(stage == 1 ? xe : rl);
  out.alpha_d = dis != 0.0 ? 0.25 * base / dis : 0.0;
  out.alpha_m = mem != 0.0 ? 0.25 * base / mem : 0.0;
  out.total = out.alpha_c * xe + out.alpha_r * rl + out.alpha_d * dis + out.alpha_m * mem;
  return out;
}

TargetForward forward_target(const Mat& diff0, const std::vector<double>& dscores,
                             CaptionMode mode, double omega, double bias,
                             const std::vector<int>& gt_tokens,
                             const ToyDecoderParams& dec,
                             const MemoryClassifierParams& cls) {
  TargetForward fwd;
  fwd.diff0 = diff0;
  fwd.dscores = dscores;
  fwd.mode = mode;
  fwd.omega = omega;
  fwd.bias = bias;
  fwd.attention = distinctive_attention(dscores, omega, bias, mode);
  fwd.weighted = weight_memory(diff0, fwd.attention);
  fwd.gt_tokens = gt_tokens;

  double scale = 1.0 / std::sqrt(static_cast<double>(fwd.weighted.cols));
  int prev = dec.marker_token();
  for (int token : gt_tokens) {
    DecoderStepCache step;
    step.prev_token = prev;
    std::span<const double> e = dec.embed.row(prev);
    std::vector<double> scores(static_cast<size_t>(fwd.weighted.rows));
    for (int i = 0; i < fwd.weighted.rows; ++i) {
      scores[static_cast<size_t>(i)] = dot(e, fwd.weighted.row(i)) * scale;
    }
    step.attn = softmax(scores);
    step.hidden.assign(e.begin(), e.end());
    for (int i = 0; i < fwd.weighted.rows; ++i) {
      double w = step.attn[static_cast<size_t>(i)];
      std::span<const double> row = fwd.weighted.row(i);
      for (size_t j = 0; j < step.hidden.size(); ++j) step.hidden[j] += w * row[j];
    }
    std::vector<double> logits(static_cast<size_t>(dec.w_out.rows));
    for (int v = 0; v < dec.w_out.rows; ++v) {
      logits[static_cast<size_t>(v)] = dec.b_out[static_cast<size_t>(v)] + dot(dec.w_out.row(v), step.hidden);
    }
    step.probs = softmax(logits);
    fwd.steps.push_back(std::move(step));
    prev = token;
  }

  fwd.pooled.assign(static_cast<size_t>(fwd.weighted.cols), 0.0);
  for (int i = 0; i < fwd.weighted.rows; ++i) {
    for (int j = 0; j < fwd.weighted.cols; ++j) fwd.pooled[static_cast<size_t>(j)] += fwd.weighted.at(i, j);
  }
  for (double& x : fwd.pooled) x /= static_cast<double>(fwd.weighted.rows);
  fwd.mem_probs = classify_memory(fwd.weighted, cls);
  return fwd;
}

ParamGradients ParamGradients::zeros_like(const ToyDecoderParams& dec,
                                          const MemoryClassifierParams& cls) {
  ParamGradients g;
  g.embed = Mat(dec.embed.rows, dec.embed.cols);
  g.w_out = Mat(dec.w_out.rows, dec.w_out.cols);
  g.b_out.assign(dec.b_out.size(), 0.0);
  g.w_mc = Mat(cls.w.rows, cls.w.cols);
  g.b_mc.assign(cls.b.size(), 0.0);
  return g;
}

void ParamGradients::accumulate(const ParamGradients& other) {
  // Blocks the other side never touched (decoder-only SCST gradients leave
  // the classifier empty) are skipped.
  auto add = [](std::vector<double>& dst, const std::vector<double>& src) {
    if (src.empty()) return;
    for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  };
  omega += other.omega;
  bias += other.bias;
  add(embed.data, other.embed.data);
  add(w_out.data, other.w_out.data);
  add(b_out, other.b_out);
  add(w_mc.data, other.w_mc.data);
  add(b_mc, other.b_mc);
}

void ParamGradients::scale(double factor) {
  omega *= factor;
  bias *= factor;
  for (double& x : embed.data) x *= factor;
  for (double& x : w_out.data) x *= factor;
  for (double& x : b_out) x *= factor;
  for (double& x : w_mc.data) x *= factor;
  for (double& x : b_mc) x *= factor;
}

namespace {

// Backprop through one decoder step given d(loss)/d(logits); accumulates
// parameter gradients and d(loss)/d(M') rows.
void backprop_decoder_step(const Mat& weighted, const DecoderStepCache& step,
                           const std::vector<double>& dlogits, const ToyDecoderParams& dec,
                           ParamGradients& grads, Mat& d_weighted) {
  int width = weighted.cols;
  int rows = weighted.rows;
  double scale = 1.0 / std::sqrt(static_cast<double>(width));

  std::vector<double> dh(static_cast<size_t>(width), 0.0);
  for (int v = 0; v < dec.w_out.rows; ++v) {
    double g = dlogits[static_cast<size_t>(v)];
    if (g == 0.0) continue;
    grads.b_out[static_cast<size_t>(v)] += g;
    std::span<const double> w_row = dec.w_out.row(v);
    std::span<double> gw_row = grads.w_out.row(v);
    for (int j = 0; j < width; ++j) {
      gw_row[static_cast<size_t>(j)] += g * step.hidden[static_cast<size_t>(j)];
      dh[static_cast<size_t>(j)] += g * w_row[static_cast<size_t>(j)];
    }
  }

  // hidden = embed(prev) + sum_i attn_i * m'_i
  std::vector<double> de = dh;
  std::vector<double> dattn(static_cast<size_t>(rows), 0.0);
  for (int i = 0; i < rows; ++i) {
    dattn[static_cast<size_t>(i)] = dot(dh, weighted.row(i));
    double a = step.attn[static_cast<size_t>(i)];
    std::span<double> dm_row = d_weighted.row(i);
    for (int j = 0; j < width; ++j) dm_row[static_cast<size_t>(j)] += a * dh[static_cast<size_t>(j)];
  }

  // attn = softmax(scores), scores_i = dot(e, m'_i) * scale
  double attn_dot = 0.0;
  for (int i = 0; i < rows; ++i) attn_dot += step.attn[static_cast<size_t>(i)] * dattn[static_cast<size_t>(i)];
  std::span<const double> e = dec.embed.row(step.prev_token);
  for (int i = 0; i < rows; ++i) {
    double ds = step.attn[static_cast<size_t>(i)] * (dattn[static_cast<size_t>(i)] - attn_dot) * scale;
    if (ds == 0.0) continue;
    std::span<const double> m_row = weighted.row(i);
    std::span<double> dm_row = d_weighted.row(i);
    for (int j = 0; j < width; ++j) {
      de[static_cast<size_t>(j)] += ds * m_row[static_cast<size_t>(j)];
      dm_row[static_cast<size_t>(j)] += ds * e[static_cast<size_t>(j)];
    }
  }

  std::span<double> ge = grads.embed.row(step.prev_token);
  for (int j = 0; j < width; ++j) ge[static_cast<size_t>(j)] += de[static_cast<size_t>(j)];
}

}  // namespace

ParamGradients analytic_gradients(const TargetForward& fwd, const WeightedWords& words,
                                  double w_xe, double w_d, double w_m,
                                  const ToyDecoderParams& dec,
                                  const MemoryClassifierParams& cls) {
  ParamGradients grads = ParamGradients::zeros_like(dec, cls);
  Mat d_weighted(fwd.weighted.rows, fwd.weighted.cols);
  size_t out_size = static_cast<size_t>(dec.w_out.rows);

  for (size_t t = 0; t < fwd.steps.size(); ++t) {
    const DecoderStepCache& step = fwd.steps[t];
    std::vector<double> dlogits(out_size, 0.0);
    double prob_mass = 0.0;  // total coefficient multiplying P_t
    if (w_xe != 0.0) {
      int token = fwd.gt_tokens[t];
      if (step.probs[static_cast<size_t>(token)] > kProbFloor) {
        prob_mass += w_xe;
        dlogits[static_cast<size_t>(token)] -= w_xe;
      }
    }
    if (w_d != 0.0) {
      for (const auto& [id, lambda] : words.items) {
        if (step.probs[static_cast<size_t>(id)] > kProbFloor) {
          prob_mass += w_d * lambda;
          dlogits[static_cast<size_t>(id)] -= w_d * lambda;
        }
      }
    }
    if (prob_mass != 0.0) {
      for (size_t v = 0; v < out_size; ++v) dlogits[v] += prob_mass * step.probs[v];
    }
    backprop_decoder_step(fwd.weighted, step, dlogits, dec, grads, d_weighted);
  }

  if (w_m != 0.0) {
    std::vector<double> dpooled(static_cast<size_t>(fwd.weighted.cols), 0.0);
    for (const auto& [id, lambda] : words.items) {
      double p = fwd.mem_probs[static_cast<size_t>(id)];
      if (p <= kProbFloor) continue;
      double dz = -w_m * lambda * (1.0 - p);
      grads.b_mc[static_cast<size_t>(id)] += dz;
      std::span<const double> w_row = cls.w.row(id);
      std::span<double> gw_row = grads.w_mc.row(id);
      for (int j = 0; j < fwd.weighted.cols; ++j) {
        gw_row[static_cast<size_t>(j)] += dz * fwd.pooled[static_cast<size_t>(j)];
        dpooled[static_cast<size_t>(j)] += dz * w_row[static_cast<size_t>(j)];
      }
    }
    double inv_rows = 1.0 / static_cast<double>(fwd.weighted.rows);
    for (int i = 0; i < fwd.weighted.rows; ++i) {
      std::span<double> dm_row = d_weighted.row(i);
      for (int j = 0; j < fwd.weighted.cols; ++j) {
        dm_row[static_cast<size_t>(j)] += inv_rows * dpooled[static_cast<size_t>(j)];
      }
    }
  }

  if (fwd.mode == CaptionMode::kDistinctive) {
    for (int i = 0; i < fwd.weighted.rows; ++i) {
      double da = dot(d_weighted.row(i), fwd.diff0.row(i));
      grads.omega += da * fwd.dscores[static_cast<size_t>(i)];
      grads.bias += da;
    }
  }
  return grads;
}

std::vector<int> greedy_decode(const Mat& weighted, const ToyDecoderParams& dec, int max_len) {
  std::vector<int> out;
  int prev = dec.marker_token();
  for (int t = 0; t < max_len; ++t) {
    std::vector<double> probs = toy_decoder_step(weighted, prev, dec);
    int best = 0;
    for (int v = 1; v < static_cast<int>(probs.size()); ++v) {
      if (probs[static_cast<size_t>(v)] > probs[static_cast<size_t>(best)]) best = v;
    }
    if (best == dec.marker_token()) break;
    out.push_back(best);
    prev = best;
  }
  return out;
}

ScstOutcome scst_step(const Mat& weighted, const ToyDecoderParams& dec,
                      const std::vector<TokenSeq>& target_gts, const IdfTable& idf,
                      const Vocab& vocab, Rng& rng, int max_len) {
  ScstOutcome outcome;
  outcome.greedy = greedy_decode(weighted, dec, max_len);

  // Multinomial rollout; the terminating marker (when sampled) is part of
  // the sequence log-probability.
  std::vector<int> sampled_steps;  // includes the marker when sampled
  int prev = dec.marker_token();
  for (int t = 0; t < max_len; ++t) {
    std::vector<double> probs = toy_decoder_step(weighted, prev, dec);
    double u = rng.uniform();
    double acc = 0.0;
    int pick = static_cast<int>(probs.size()) - 1;
    for (size_t v = 0; v < probs.size(); ++v) {
      acc += probs[v];
      if (u < acc) {
        pick = static_cast<int>(v);
        break;
      }
    }
    sampled_steps.push_back(pick);
    if (pick == dec.marker_token()) break;
    outcome.sampled.push_back(pick);
    prev = pick;
  }

  MemoryClassifierParams dummy_cls;
  dummy_cls.w = Mat(0, weighted.cols);
  outcome.grads = ParamGradients::zeros_like(dec, dummy_cls);
  if (outcome.sampled == outcome.greedy) return outcome;  // zero advantage, zero gradient

  outcome.sampled_reward = rl_reward(vocab.decode(outcome.sampled), target_gts, idf);
  outcome.greedy_reward = rl_reward(vocab.decode(outcome.greedy), target_gts, idf);
  outcome.advantage = outcome.sampled_reward - outcome.greedy_reward;
  if (outcome.advantage == 0.0) return outcome;

  // Rebuild the sampled rollout with teacher forcing to reuse the shared
  // backprop; gradient of -advantage * log p(sampled).
  MemoryClassifierParams no_cls;
  no_cls.w = Mat(0, weighted.cols);
  std::vector<double> flat_scores(static_cast<size_t>(weighted.rows), 0.0);
  TargetForward fwd = forward_target(weighted, flat_scores, CaptionMode::kCommon, 0.0, 0.0,
                                     sampled_steps, dec, no_cls);
  // forward_target weights memory by A=1, so fwd.weighted == weighted here.
  Mat d_weighted(weighted.rows, weighted.cols);
  for (size_t t = 0; t < fwd.steps.size(); ++t) {
    const DecoderStepCache& step = fwd.steps[t];
    int token = sampled_steps[t];
    std::vector<double> dlogits(step.probs.size(), 0.0);
    if (step.probs[static_cast<size_t>(token)] > kProbFloor) {
      for (size_t v = 0; v < step.probs.size(); ++v) {
        dlogits[v] = outcome.advantage * step.probs[v];
      }
      dlogits[static_cast<size_t>(token)] -= outcome.advantage;
    }
    backprop_decoder_step(weighted, step, dlogits, dec, outcome.grads, d_weighted);
  }
  return outcome;
}

// ---- Gradient check ---------------------------------------------------------

namespace {

Mat random_mat(int rows, int cols, Rng& rng, double lo = -0.1, double hi = 0.1) {
  Mat m(rows, cols);
  for (double& x : m.data) x = rng.uniform(lo, hi);
  return m;
}

struct CheckInstance {
  Mat diff0;
  std::vector<double> dscores;
  double omega = 1.0, bias = 0.5;
  std::vector<int> gt_tokens;
  WeightedWords words;
  ToyDecoderParams dec;
  MemoryClassifierParams cls;
};

CheckInstance make_instance(uint64_t seed) {
  Rng rng(seed);
  CheckInstance inst;
  int n0 = 1 + static_cast<int>(rng.below(8));      // <= 8 regions
  int d_m = 2 * (2 + static_cast<int>(rng.below(7)));  // even, in [4, 16]
  int vocab = 3 + static_cast<int>(rng.below(18));  // <= 20
  int caption_len = 1 + static_cast<int>(rng.below(5));

  // The difference memory and D are inputs of the checked chain (D is a
  // constant of omega/bias), so they are drawn directly. O(1)-magnitude
  // entries keep every gradient coordinate well above the resolution of
  // double-precision central differences at h = 1e-5; encoder-produced
  // difference memories can be small enough that true gradients fall below
  // what finite differences can see.
  inst.diff0 = random_mat(n0, d_m, rng, -1.0, 1.0);
  std::vector<double> raw(static_cast<size_t>(n0));
  for (double& x : raw) x = rng.uniform(-1.0, 1.0);
  inst.dscores = softmax(raw);

  inst.omega = rng.uniform(0.2, 1.5);
  inst.bias = rng.uniform(0.1, 1.0);
  for (int t = 0; t < caption_len; ++t) {
    inst.gt_tokens.push_back(static_cast<int>(rng.below(static_cast<size_t>(vocab + 1))));
  }
  int omega_words = 1 + static_cast<int>(rng.below(4));
  for (int i = 0; i < omega_words; ++i) {
    inst.words.items.emplace_back(static_cast<int>(rng.below(static_cast<size_t>(vocab))),
                                  rng.uniform(0.1, 1.0));
  }
  inst.dec.embed = random_mat(vocab + 1, d_m, rng, -0.5, 0.5);
  inst.dec.w_out = random_mat(vocab + 1, d_m, rng, -0.5, 0.5);
  inst.dec.b_out.resize(static_cast<size_t>(vocab + 1));
  for (double& x : inst.dec.b_out) x = rng.uniform(-0.5, 0.5);
  inst.cls.w = random_mat(vocab, d_m, rng, -0.5, 0.5);
  inst.cls.b.resize(static_cast<size_t>(vocab));
  for (double& x : inst.cls.b) x = rng.uniform(-0.5, 0.5);
  return inst;
}

double instance_loss(const CheckInstance& inst) {
  TargetForward fwd = forward_target(inst.diff0, inst.dscores, CaptionMode::kDistinctive,
                                     inst.omega, inst.bias, inst.gt_tokens, inst.dec, inst.cls);
  std::vector<std::vector<double>> probs;
  probs.reserve(fwd.steps.size());
  for (const auto& step : fwd.steps) probs.push_back(step.probs);
  return xe_loss(probs, inst.gt_tokens) + weighted_distinctive_loss(probs, inst.words) +
         mem_cls_loss(fwd.mem_probs, inst.words);
}

double rel_err(double analytic, double numeric) {
  double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
  return std::fabs(analytic - numeric) / denom;
}

double central_diff(CheckInstance& inst, double* slot, double h) {
  double saved = *slot;
  *slot = saved + h;
  double up = instance_loss(inst);
  *slot = saved - h;
  double down = instance_loss(inst);
  *slot = saved;
  return (up - down) / (2.0 * h);
}

}  // namespace

GradCheckResult gradient_check_instance(uint64_t seed) {
  constexpr double kStep = 1e-5;
  CheckInstance inst = make_instance(seed);
  TargetForward fwd = forward_target(inst.diff0, inst.dscores, CaptionMode::kDistinctive,
                                     inst.omega, inst.bias, inst.gt_tokens, inst.dec, inst.cls);
  ParamGradients grads = analytic_gradients(fwd, inst.words, 1.0, 1.0, 1.0, inst.dec, inst.cls);

  GradCheckResult result;
  result.err_omega = rel_err(grads.omega, central_diff(inst, &inst.omega, kStep));
  result.err_bias = rel_err(grads.bias, central_diff(inst, &inst.bias, kStep));
  for (size_t i = 0; i < inst.cls.w.data.size(); ++i) {
    result.err_classifier = std::max(
        result.err_classifier, rel_err(grads.w_mc.data[i], central_diff(inst, &inst.cls.w.data[i], kStep)));
  }
  for (size_t i = 0; i < inst.cls.b.size(); ++i) {
    result.err_classifier = std::max(
        result.err_classifier, rel_err(grads.b_mc[i], central_diff(inst, &inst.cls.b[i], kStep)));
  }
  for (size_t i = 0; i < inst.dec.embed.data.size(); ++i) {
    result.err_decoder = std::max(
        result.err_decoder, rel_err(grads.embed.data[i], central_diff(inst, &inst.dec.embed.data[i], kStep)));
  }
  for (size_t i = 0; i < inst.dec.w_out.data.size(); ++i) {
    result.err_decoder = std::max(
        result.err_decoder, rel_err(grads.w_out.data[i], central_diff(inst, &inst.dec.w_out.data[i], kStep)));
  }
  for (size_t i = 0; i < inst.dec.b_out.size(); ++i) {
    result.err_decoder = std::max(
        result.err_decoder, rel_err(grads.b_out[i], central_diff(inst, &inst.dec.b_out[i], kStep)));
  }
  result.worst = std::max({result.err_omega, result.err_bias, result.err_classifier, result.err_decoder});
  result.pass = result.worst < 1e-4;
  return result;
}

std::string gradcheck_report(uint64_t seed, int instances) {
  std::ostringstream out;
  out << "instance  omega        bias         classifier   decoder      result\n";
  bool all_pass = true;
  double worst = 0.0;
  for (int i = 0; i < instances; ++i) {
    GradCheckResult r = gradient_check_instance(seed + static_cast<uint64_t>(i));
    all_pass = all_pass && r.pass;
    worst = std::max(worst, r.worst);
    char line[160];
    std::snprintf(line, sizeof(line), "%-8d  %-11.3e  %-11.3e  %-11.3e  %-11.3e  %s\n", i,
                  r.err_omega, r.err_bias, r.err_classifier, r.err_decoder,
                  r.pass ? "pass" : "FAIL");
    out << line;
  }
  char tail[160];
  std::snprintf(tail, sizeof(tail), "max relative error %.3e over %d instances: %s\n", worst,
                instances, all_pass ? "PASS" : "FAIL");
  out << tail;
  return out.str();
}

// ---- Toy task and trainer ---------------------------------------------------

ToyTask make_planted_task(int n_groups, int group_size, int vocab_size, int d_m,
                          int regions, uint64_t seed) {
  if (n_groups < 1 || group_size < 2 || regions < 2) {
    throw ValidationError("make_planted_task: need >= 1 group, >= 2 images, >= 2 regions");
  }
  int n_images = n_groups * group_size;
  if (vocab_size < n_images + n_groups + 1) {
    throw ValidationError("make_planted_task: vocab too small for planted words");
  }
  Rng rng(seed);
  ToyTask task;

  // With uniform(-0.1, 0.1) encoder weights, attention logits spread
  // proportionally to |x|^2 / 3e2; region features need this amplitude for
  // the encoder to attend by similarity rather than near-uniformly, which is
  // what lets the union encoding cancel the duplicated common regions.
  constexpr double kFeatureAmplitude = 16.0;

  auto pad2 = [](int v) {
    std::string s = std::to_string(v);
    return s.size() < 2 ? "0" + s : s;
  };

  std::vector<std::string> vocab_words;
  for (int i = 0; i < n_images; ++i) vocab_words.push_back("item" + pad2(i));
  for (int g = 0; g < n_groups; ++g) vocab_words.push_back("scene" + pad2(g));
  vocab_words.push_back("object");
  for (int i = static_cast<int>(vocab_words.size()); i < vocab_size; ++i) {
    vocab_words.push_back("pad" + pad2(i));
  }
  task.vocab = Vocab::from_words(vocab_words);

  for (int g = 0; g < n_groups; ++g) {
    // Regions shared by every image of the group.
    std::vector<std::vector<double>> common(static_cast<size_t>(regions - 1));
    for (auto& row : common) {
      row.resize(static_cast<size_t>(d_m));
      for (double& x : row) x = rng.uniform(-kFeatureAmplitude, kFeatureAmplitude);
    }
    ImageGroup group;
    for (int m = 0; m < group_size; ++m) {
      int idx = g * group_size + m;
      std::string id = "img" + pad2(idx);
      std::string planted = "item" + pad2(idx);
      task.dataset.add(id, {planted + " object scene" + pad2(g)});
      Mat features(regions, d_m);
      int planted_row = idx % regions;
      int common_i = 0;
      for (int r = 0; r < regions; ++r) {
        if (r == planted_row) {
          for (int c = 0; c < d_m; ++c) {
            features.at(r, c) = rng.uniform(-kFeatureAmplitude, kFeatureAmplitude);
          }
        } else {
          for (int c = 0; c < d_m; ++c) features.at(r, c) = common[static_cast<size_t>(common_i)][static_cast<size_t>(c)];
          ++common_i;
        }
      }
      task.features[id] = std::move(features);
      task.planted_word[id] = planted;
      task.planted_region[id] = planted_row;
      if (m == 0) {
        group.target = id;
      } else {
        group.similars.push_back(id);
      }
    }
    task.groups.push_back(std::move(group));
  }
  return task;
}

namespace {

struct RolePrep {
  std::string id;
  size_t member_index = 0;
  std::vector<double> dscores;
  WeightedWords words;
  std::vector<std::vector<int>> captions;      // token ids incl. trailing marker
  std::vector<CaptionMode> modes;              // per caption
  std::vector<TokenSeq> gts;                   // tokenized GT captions
};

struct GroupPrep {
  MemoryBank bank;
  std::vector<RolePrep> roles;
};

ToyDecoderParams random_decoder(int vocab, int d_m, Rng& rng) {
  ToyDecoderParams dec;
  dec.embed = random_mat(vocab + 1, d_m, rng);
  dec.w_out = random_mat(vocab + 1, d_m, rng);
  dec.b_out.resize(static_cast<size_t>(vocab + 1));
  for (double& x : dec.b_out) x = rng.uniform(-0.1, 0.1);
  return dec;
}

MemoryClassifierParams random_classifier(int vocab, int d_m, Rng& rng) {
  MemoryClassifierParams cls;
  cls.w = random_mat(vocab, d_m, rng);
  cls.b.resize(static_cast<size_t>(vocab));
  for (double& x : cls.b) x = rng.uniform(-0.1, 0.1);
  return cls;
}

}  // namespace

TrainResult train_toy(const ToyConfig& config) {
  if (!config.features_path.empty() || !config.captions_path.empty() ||
      !config.groups_path.empty()) {
    throw ValidationError("train_toy: file-backed tasks go through train_toy_on");
  }
  ToyTask task = make_planted_task(config.n_groups, config.k_similar + 1, config.vocab,
                                   config.d_m, config.regions, config.seed);
  return train_toy_on(task, config);
}

TrainState fresh_state(int d_m, int heads, int layers, int ffn, int vocab, uint64_t seed) {
  TrainState state;
  state.seed = seed;
  Rng rng(seed * 0x9e3779b97f4a7c15ULL + 1);
  state.encoder = EncoderParams::random(layers, heads, d_m, ffn, rng.next());
  state.decoder = random_decoder(vocab, d_m, rng);
  state.classifier = random_classifier(vocab, d_m, rng);
  state.omega = 1.0;
  state.bias = 0.5;
  return state;
}

TrainResult train_toy_on(const ToyTask& task, const ToyConfig& config) {
  if (config.stage != 1 && config.stage != 2) throw ValidationError("train_toy: stage must be 1 or 2");
  IndicatorRule rule;
  if (config.indicator == "median") {
    rule = IndicatorRule::kMedian;
  } else if (config.indicator == "threshold") {
    rule = IndicatorRule::kThreshold;
  } else {
    throw ValidationError("train_toy: unknown indicator rule '" + config.indicator + "'");
  }

  TrainResult result;
  result.task = task;
  result.idf = idf_build(task.dataset);
  const Vocab& vocab = task.vocab;

  TrainState& state = result.state;
  state = fresh_state(config.d_m, config.heads, config.layers, config.ffn, vocab.size(),
                      config.seed);
  Rng rng(config.seed * 0x2545f4914f6cdd1dULL + 3);  // stage-2 sampling stream

  // The encoder is frozen, so memories, distinctiveness scores, word sets,
  // and caption indicators are all fixed; precompute them per group.
  std::vector<GroupPrep> preps;
  for (const ImageGroup& group : task.groups) {
    GroupPrep prep;
    std::vector<std::string> members = group.members();
    std::vector<Mat> features;
    for (const std::string& id : members) {
      auto it = task.features.find(id);
      if (it == task.features.end()) throw ValidationError("train_toy: no features for image " + id);
      features.push_back(it->second);
    }
    prep.bank = build_memory_bank(features, state.encoder);
    for (size_t m = 0; m < members.size(); ++m) {
      RolePrep role;
      role.id = members[m];
      role.member_index = m;
      AttentionState att = run_attention(prep.bank, m, state.omega, state.bias,
                                         CaptionMode::kDistinctive);
      role.dscores = att.scores.normalized;

      std::vector<TokenSeq> peer_gts;
      for (size_t j = 0; j < members.size(); ++j) {
        if (j == m) continue;
        const auto& toks = task.dataset.at(members[j]).tokenized;
        peer_gts.insert(peer_gts.end(), toks.begin(), toks.end());
      }
      role.gts = task.dataset.at(members[m]).tokenized;

      DistinctProfile profile;
      profile.target = role.id;
      profile.omega = distinct_words(role.gts, peer_gts);
      for (const std::string& w : profile.omega) profile.weights[w] = 1.0;
      role.words = map_profile(profile, vocab);

      ImageGroup role_group;
      role_group.target = members[m];
      for (size_t j = 0; j < members.size(); ++j) {
        if (j != m) role_group.similars.push_back(members[j]);
      }
      CaptionIndicator indicator =
          indicate_captions(role.gts, role_group, task.dataset, result.idf, rule, config.tau);
      for (size_t c = 0; c < role.gts.size(); ++c) {
        std::vector<int> tokens = vocab.encode(role.gts[c]);
        tokens.push_back(vocab.marker());  // supervise the stop decision
        role.captions.push_back(std::move(tokens));
        role.modes.push_back(indicator.distinctive[c] ? CaptionMode::kDistinctive
                                                      : CaptionMode::kCommon);
      }
      prep.roles.push_back(std::move(role));
    }
    preps.push_back(std::move(prep));
  }

  for (int step = 1; step <= config.steps; ++step) {
    ParamGradients grads = ParamGradients::zeros_like(state.decoder, state.classifier);
    double sum_xe = 0.0, sum_dis = 0.0, sum_mem = 0.0, sum_rl = 0.0, sum_total = 0.0;
    int n_items = 0;
    for (const GroupPrep& prep : preps) {
      for (const RolePrep& role : prep.roles) {
        for (size_t c = 0; c < role.captions.size(); ++c) {
          TargetForward fwd = forward_target(prep.bank.diff[role.member_index], role.dscores,
                                             role.modes[c], state.omega, state.bias,
                                             role.captions[c], state.decoder, state.classifier);
          std::vector<std::vector<double>> probs;
          probs.reserve(fwd.steps.size());
          for (const auto& s : fwd.steps) probs.push_back(s.probs);
          double xe = xe_loss(probs, role.captions[c]);
          double dis = weighted_distinctive_loss(probs, role.words);
          double mem = mem_cls_loss(fwd.mem_probs, role.words);

          double rl = 0.0;
          ScstOutcome scst;
          if (config.stage == 2) {
            scst = scst_step(fwd.weighted, state.decoder, role.gts, result.idf, vocab, rng,
                             config.max_decode_len);
            rl = -scst.sampled_reward;
          }
          LossBreakdown breakdown = combine(xe, rl, dis, mem, config.stage);
          if (!std::isfinite(breakdown.total)) {
            throw ValidationError("train_toy: non-finite loss at step " + std::to_string(step));
          }
          ParamGradients g = analytic_gradients(fwd, role.words, breakdown.alpha_c,
                                                breakdown.alpha_d, breakdown.alpha_m,
                                                state.decoder, state.classifier);
          grads.accumulate(g);
          if (config.stage == 2) {
            scst.grads.scale(breakdown.alpha_r);
            grads.accumulate(scst.grads);
          }
          sum_xe += xe;
          sum_dis += dis;
          sum_mem += mem;
          sum_rl += rl;
          sum_total += breakdown.total;
          ++n_items;
        }
      }
    }
    grads.scale(1.0 / static_cast<double>(n_items));
    double lr = config.learning_rate;
    state.omega = std::max(0.0, state.omega - lr * grads.omega);
    state.bias = std::max(0.0, state.bias - lr * grads.bias);
    for (size_t i = 0; i < state.decoder.embed.data.size(); ++i) state.decoder.embed.data[i] -= lr * grads.embed.data[i];
    for (size_t i = 0; i < state.decoder.w_out.data.size(); ++i) state.decoder.w_out.data[i] -= lr * grads.w_out.data[i];
    for (size_t i = 0; i < state.decoder.b_out.size(); ++i) state.decoder.b_out[i] -= lr * grads.b_out[i];
    for (size_t i = 0; i < state.classifier.w.data.size(); ++i) state.classifier.w.data[i] -= lr * grads.w_mc.data[i];
    for (size_t i = 0; i < state.classifier.b.size(); ++i) state.classifier.b[i] -= lr * grads.b_mc[i];
    state.step = step;

    TrainLogEntry entry;
    entry.step = step;
    entry.xe = sum_xe / n_items;
    entry.dis = sum_dis / n_items;
    entry.mem = sum_mem / n_items;
    entry.rl = sum_rl / n_items;
    entry.total = sum_total / n_items;
    entry.omega = state.omega;
    entry.bias = state.bias;
    result.log.push_back(entry);
  }
  return result;
}

std::map<std::string, TokenSeq> greedy_captions(const TrainResult& result, int max_len) {
  std::map<std::string, TokenSeq> captions;
  for (const ImageGroup& group : result.task.groups) {
    std::vector<std::string> members = group.members();
    std::vector<Mat> features;
    for (const std::string& id : members) features.push_back(result.task.features.at(id));
    MemoryBank bank = build_memory_bank(features, result.state.encoder);
    for (size_t m = 0; m < members.size(); ++m) {
      AttentionState att = run_attention(bank, m, result.state.omega, result.state.bias,
                                         CaptionMode::kDistinctive);
      std::vector<int> ids = greedy_decode(att.weighted, result.state.decoder, max_len);
      captions[members[m]] = result.task.vocab.decode(ids);
    }
  }
  return captions;
}

}  // namespace discap
