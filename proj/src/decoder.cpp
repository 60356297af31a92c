// SPDX-License-Identifier: Apache-2.0
#include "genrt/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace genrt {

namespace {

constexpr double kMaskSentinel = -1e9;

std::pair<double, double> softmax2(const Mat& logits) {
  double m = std::max(logits(0, 0), logits(0, 1));
  double e0 = std::exp(logits(0, 0) - m);
  double e1 = std::exp(logits(0, 1) - m);
  return {e0 / (e0 + e1), e1 / (e0 + e1)};
}

}  // namespace

DecodeMode parse_decode_mode(const std::string& name) {
  if (name == "full") return DecodeMode::Full;
  if (name == "rerank_only") return DecodeMode::RerankOnly;
  if (name == "truncate_only") return DecodeMode::TruncateOnly;
  if (name == "fast") return DecodeMode::Fast;
  throw std::invalid_argument("unknown decode mode '" + name + "'");
}

std::string to_string(DecodeMode mode) {
  switch (mode) {
    case DecodeMode::Full: return "full";
    case DecodeMode::RerankOnly: return "rerank_only";
    case DecodeMode::TruncateOnly: return "truncate_only";
    case DecodeMode::Fast: return "fast";
  }
  return "?";
}

int rel_pos_bucket(int relative_position, int num_buckets, int max_distance) {
  int half = num_buckets / 2;
  int bucket = relative_position > 0 ? half : 0;
  int rel = std::abs(relative_position);
  int max_exact = std::max(1, half / 2);
  if (rel < max_exact) return bucket + rel;
  double log_ratio = std::log(static_cast<double>(rel) / max_exact) /
                     std::log(static_cast<double>(max_distance) / max_exact);
  int idx = max_exact + static_cast<int>(log_ratio * (half - max_exact));
  return bucket + std::min(idx, half - 1);
}

Var sequential_dependency(Tape& t, const BoundParams& p, Var U,
                          const std::vector<int>& chosen_prefix) {
  if (chosen_prefix.empty()) {
    return transfer(t, p, p.start);
  }
  Var u_prefix = t.select_rows(U, chosen_prefix);
  Var x_prefix = transfer(t, p, u_prefix);
  int last = static_cast<int>(chosen_prefix.size()) - 1;
  return mhsa(t, p.prefix_attn, x_prefix, p.config->heads, {}, last, 1);
}

Var latent_cross(Tape& t, const BoundParams& p, Var U, Var O) {
  Var gate = t.add_scalar(t.add_row_broadcast(t.matmul(O, p.latent_W), p.latent_b), 1.0);
  Var ffn = t.swish(t.add_row_broadcast(t.matmul(U, p.ffn_W), p.ffn_b));
  return t.mul(gate, ffn);
}

Var score_candidates(Tape& t, const BoundParams& p, Var I, Var m,
                     const std::vector<bool>& selected) {
  const int n = static_cast<int>(t.val(I).rows());
  Var M = t.repeat_rows(m, n);
  std::vector<Var> parts{I, M};
  Var inputs = t.concat_cols(parts);
  Var hidden = t.swish(t.add_row_broadcast(t.matmul(inputs, p.rffn_W1), p.rffn_b1));
  Var scores = t.transpose(t.add_row_broadcast(t.matmul(hidden, p.rffn_W2), p.rffn_b2));
  Mat mask = Mat::Zero(1, n);
  for (int i = 0; i < n; ++i) {
    if (selected[i]) mask(0, i) = 1.0;
  }
  return t.mask_fill(scores, mask, kMaskSentinel);
}

std::vector<int> dynamic_rank(const Vec& scores, const std::vector<bool>& selected) {
  std::vector<int> order;
  for (int i = 0; i < scores.size(); ++i) {
    if (!selected[i]) order.push_back(i);
  }
  if (order.empty()) throw std::runtime_error("decode exhausted: all candidates masked");
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  return order;
}

Var truncation_logits(Tape& t, const BoundParams& p, Var O, const std::vector<int>& prefix,
                      int current, const std::vector<int>& window) {
  std::vector<int> rows = prefix;
  rows.push_back(current);
  const int current_pos = static_cast<int>(rows.size()) - 1;
  rows.insert(rows.end(), window.begin(), window.end());

  Var G = t.select_rows(O, rows);
  const int len = static_cast<int>(rows.size());
  Eigen::MatrixXi idx(1, len);
  for (int b = 0; b < len; ++b) {
    idx(0, b) = rel_pos_bucket(current_pos - b, p.config->rel_pos_buckets,
                               p.config->rel_pos_max_distance);
  }
  Var bias = t.gather(p.relpos_table, idx);
  Var j = mhsa(t, p.trunc_attn, G, p.config->heads, bias, current_pos, 1);
  return t.add_row_broadcast(t.matmul(j, p.head_W), p.head_b);
}

TapeRollout rollout_query(Tape& t, const BoundParams& p, const QueryList& list,
                          const RolloutOptions& options) {
  const int n = list.size();
  const int beta = p.config->beta;
  const double threshold = p.config->cut_threshold;

  TapeRollout roll;
  roll.enc = run_encoder(t, p, list);
  roll.cut_step = n;

  Var I;
  if (!options.follow_input_order) {
    I = latent_cross(t, p, roll.enc.U, roll.enc.O);
  }

  Vec initial_scores(n);
  for (int i = 0; i < n; ++i) initial_scores[i] = list.docs[i].initial_score;

  std::vector<bool> selected(n, false);
  bool cut_seen = false;
  for (int step = 0; step < n; ++step) {
    StepRecord rec;

    if (options.follow_input_order) {
      // Scores come from the input ranked list; only the head is consulted.
      Vec s = initial_scores;
      for (int i = 0; i < n; ++i) {
        if (selected[i]) s[i] = kMaskSentinel;
      }
      rec.scores = t.constant(s.transpose());
      rec.ranking.resize(n - step);
      std::iota(rec.ranking.begin(), rec.ranking.end(), step);
    } else {
      Var m = sequential_dependency(t, p, roll.enc.U, roll.chosen);
      rec.scores = score_candidates(t, p, I, m, selected);
      if (options.forced_rankings) {
        rec.ranking = options.forced_rankings->at(step);
      } else {
        rec.ranking = dynamic_rank(t.val(rec.scores).row(0).transpose(), selected);
      }
    }

    const int pick = rec.ranking[0];
    if (options.with_truncation) {
      std::vector<int> window(
          rec.ranking.begin() + 1,
          rec.ranking.begin() + 1 + std::min<size_t>(beta, rec.ranking.size() - 1));
      rec.trunc_logits = truncation_logits(t, p, roll.enc.O, roll.chosen, pick, window);
      rec.cut_prob = softmax2(t.val(rec.trunc_logits));
    }

    selected[pick] = true;
    roll.chosen.push_back(pick);
    roll.steps.push_back(std::move(rec));

    if (options.with_truncation && !cut_seen &&
        roll.steps.back().cut_prob.second > threshold) {
      cut_seen = true;
      roll.cut_step = step + 1;
      if (options.stop_at_cut) break;
    }
  }
  if (!cut_seen) roll.cut_step = n;
  return roll;
}

DecodeTrace decode(const QueryList& list, const ModelParams& params, DecodeMode mode) {
  QueryList validated = validate_query_list(list, params.config);
  Tape tape(/*grad_enabled=*/false);
  BoundParams bound = bind_params(tape, params);

  DecodeTrace trace;
  trace.qid = validated.qid;
  const int n = validated.size();

  if (mode == DecodeMode::Fast) {
    // One scoring pass with the start dependency; its descending order is
    // the final list.
    EncoderOutput enc = run_encoder(tape, bound, validated);
    Var I = latent_cross(tape, bound, enc.U, enc.O);
    Var m = sequential_dependency(tape, bound, enc.U, {});
    std::vector<bool> none(n, false);
    Var scores = score_candidates(tape, bound, I, m, none);
    trace.chosen = dynamic_rank(tape.val(scores).row(0).transpose(), none);
    trace.score_matrices.push_back(tape.val(scores).row(0).transpose());
    trace.cut_step = n;
    return trace;
  }

  RolloutOptions options;
  options.with_truncation = true;
  options.stop_at_cut = mode == DecodeMode::Full || mode == DecodeMode::TruncateOnly;
  options.follow_input_order = mode == DecodeMode::TruncateOnly;

  TapeRollout roll = rollout_query(tape, bound, validated, options);
  trace.chosen = roll.chosen;
  // The reranking-only contract ignores the cut: length stays N.
  trace.cut_step = mode == DecodeMode::RerankOnly ? n : roll.cut_step;
  for (const auto& step : roll.steps) {
    trace.score_matrices.push_back(tape.val(step.scores).row(0).transpose());
    if (step.trunc_logits.valid()) trace.cut_probs.push_back(step.cut_prob);
  }
  return trace;
}

}  // namespace genrt
