// SPDX-License-Identifier: Apache-2.0
#include "genrt/losses.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "genrt/decoder.hpp"

namespace genrt {

namespace {

constexpr double kPhiMask = -1e4;

double log_b(double x, double base) { return std::log(x) / std::log(base); }

std::vector<bool> selected_before(const std::vector<int>& chosen, int step, size_t n) {
  std::vector<bool> sel(n, false);
  for (int i = 0; i < step; ++i) sel[chosen[i]] = true;
  return sel;
}

std::vector<std::vector<int>> rankings_of(const RolloutRecord& rollout) {
  if (!rollout.step_rankings.empty()) return rollout.step_rankings;
  std::vector<std::vector<int>> out;
  const size_t n = rollout.labels.size();
  for (size_t t = 0; t < rollout.chosen.size(); ++t) {
    out.push_back(dynamic_rank(rollout.score_matrices[t],
                               selected_before(rollout.chosen, static_cast<int>(t), n)));
  }
  return out;
}

}  // namespace

Vec attention_targets(const std::vector<int>& labels, const std::vector<bool>& selected) {
  const int n = static_cast<int>(labels.size());
  Vec phi(n);
  for (int i = 0; i < n; ++i) phi[i] = selected[i] ? kPhiMask : labels[i];
  double m = phi.maxCoeff();
  Vec a = (phi.array() - m).exp().matrix();
  return a / a.sum();
}

Var sa_att_loss_on_tape(Tape& t, std::span<const Var> step_scores,
                        const std::vector<int>& chosen, const std::vector<int>& labels,
                        double log_base) {
  const int n = static_cast<int>(labels.size());
  Var loss = t.constant(Mat::Zero(1, 1));
  for (size_t step = 0; step < step_scores.size(); ++step) {
    std::vector<bool> sel = selected_before(chosen, static_cast<int>(step), labels.size());
    Vec a = attention_targets(labels, sel);
    Mat sel_mask = Mat::Zero(1, n);
    for (int i = 0; i < n; ++i) sel_mask(0, i) = sel[i] ? 1.0 : 0.0;
    Var phi = t.mask_fill(step_scores[step], sel_mask, kPhiMask);
    // CE(a, softmax(phi)) = logsumexp(phi) - <a, phi>, with sum(a) == 1.
    Var ce = t.sub(t.logsumexp_rows(phi), t.dot_const(phi, a.transpose()));
    double alpha = 1.0 / log_b(static_cast<double>(step) + 2.0, log_base);
    loss = t.add(loss, t.scale(ce, alpha));
  }
  return loss;
}

Var sbs_loss_on_tape(Tape& t, std::span<const Var> step_scores,
                     const std::vector<int>& chosen, const std::vector<int>& labels,
                     double log_base) {
  const int eps = static_cast<int>(chosen.size());
  std::vector<int> seq_labels(eps);
  for (int i = 0; i < eps; ++i) seq_labels[i] = labels[chosen[i]];

  Var loss = t.constant(Mat::Zero(1, 1));
  for (int tf = 0; tf < eps; ++tf) {
    for (int tb = tf + 1; tb < eps; ++tb) {
      if (seq_labels[tb] <= seq_labels[tf]) continue;
      double delta = delta_ndcg(seq_labels, tf, tb, log_base);
      // Both scores are read from the step-tf matrix.
      Var diff = t.sub(t.pick(step_scores[tf], 0, chosen[tf]),
                       t.pick(step_scores[tf], 0, chosen[tb]));
      loss = t.add(loss, t.scale(t.softplus(diff), delta));
    }
  }
  return loss;
}

Var truncation_loss_on_tape(Tape& t, std::span<const Var> step_logits,
                            const SoftCutLabels& soft_labels) {
  if (step_logits.size() != soft_labels.size()) {
    throw std::invalid_argument("truncation loss: steps and labels misaligned");
  }
  Var loss = t.constant(Mat::Zero(1, 1));
  for (size_t step = 0; step < step_logits.size(); ++step) {
    Var logp = t.sub_col_broadcast(step_logits[step], t.logsumexp_rows(step_logits[step]));
    Var term = t.add(t.scale(t.pick(logp, 0, 1), soft_labels[step].first),
                     t.scale(t.pick(logp, 0, 0), soft_labels[step].second));
    loss = t.sub(loss, term);
  }
  return loss;
}

namespace {

// Value-level evaluation through the same tape builder.
double eval_on_scratch_tape(const RolloutRecord& rollout, double log_base, bool sbs) {
  Tape t(/*grad_enabled=*/false);
  std::vector<Var> scores;
  scores.reserve(rollout.score_matrices.size());
  for (const Vec& s : rollout.score_matrices) {
    scores.push_back(t.constant(s.transpose()));
  }
  Var loss = sbs ? sbs_loss_on_tape(t, scores, rollout.chosen, rollout.labels, log_base)
                 : sa_att_loss_on_tape(t, scores, rollout.chosen, rollout.labels, log_base);
  return t.val(loss)(0, 0);
}

}  // namespace

double step_adaptive_attention_loss(const RolloutRecord& rollout, double log_base) {
  return eval_on_scratch_tape(rollout, log_base, /*sbs=*/false);
}

double sbs_lambda_loss(const RolloutRecord& rollout, double log_base) {
  return eval_on_scratch_tape(rollout, log_base, /*sbs=*/true);
}

double rerank_loss(const RolloutRecord& rollout, double eta, double log_base) {
  return step_adaptive_attention_loss(rollout, log_base) +
         eta * sbs_lambda_loss(rollout, log_base);
}

double delta_ndcg(const std::vector<int>& sequence_labels, int i, int j, double log_base) {
  auto gain = [](int y) { return std::exp2(static_cast<double>(y)) - 1.0; };
  auto disc = [&](int pos0) { return 1.0 / log_b(static_cast<double>(pos0) + 2.0, log_base); };
  std::vector<int> ideal = sequence_labels;
  std::sort(ideal.begin(), ideal.end(), std::greater<int>());
  double idcg = 0.0;
  for (size_t p = 0; p < ideal.size(); ++p) idcg += gain(ideal[p]) * disc(static_cast<int>(p));
  if (idcg == 0.0) return 0.0;
  double swap_gain =
      (gain(sequence_labels[j]) - gain(sequence_labels[i])) * (disc(i) - disc(j));
  return std::abs(swap_gain) / idcg;
}

double tdcg(const std::vector<int>& labels_in_rank_order, const GammaMap& gamma, int x,
            double log_base) {
  if (x < 1 || x > static_cast<int>(labels_in_rank_order.size())) {
    throw std::invalid_argument("tdcg: x out of range");
  }
  double total = 0.0;
  for (int t = 1; t <= x; ++t) {
    total += gamma.gain(labels_in_rank_order[t - 1]) / log_b(static_cast<double>(t) + 1.0, log_base);
  }
  return total;
}

SoftCutLabels soft_cut_labels(const RolloutRecord& rollout, const GammaMap& gamma,
                              double log_base) {
  SoftCutLabels out;
  const auto rankings = rankings_of(rollout);
  for (size_t step = 0; step < rollout.chosen.size(); ++step) {
    const int t1 = static_cast<int>(step) + 1;  // T, 1-based
    // Local list: chosen prefix + current doc + backward window.
    std::vector<int> local_labels;
    for (size_t i = 0; i <= step; ++i) local_labels.push_back(rollout.labels[rollout.chosen[i]]);
    const auto& ranking = rankings[step];
    const int window = std::min<int>(rollout.beta, static_cast<int>(ranking.size()) - 1);
    for (int w = 1; w <= window; ++w) local_labels.push_back(rollout.labels[ranking[w]]);

    double at_cut = tdcg(local_labels, gamma, t1, log_base);
    double at_window = tdcg(local_labels, gamma, t1 + window, log_base);
    double y_cut = 1.0 / (1.0 + std::exp(at_window - at_cut));
    out.emplace_back(y_cut, 1.0 - y_cut);
  }
  return out;
}

double truncation_loss(const std::vector<std::pair<double, double>>& cut_probs,
                       const SoftCutLabels& soft_labels) {
  if (cut_probs.size() != soft_labels.size()) {
    throw std::invalid_argument("truncation loss: steps and labels misaligned");
  }
  double loss = 0.0;
  for (size_t t = 0; t < cut_probs.size(); ++t) {
    double p0 = std::max(cut_probs[t].first, 1e-12);
    double p1 = std::max(cut_probs[t].second, 1e-12);
    loss -= soft_labels[t].first * std::log(p1) + soft_labels[t].second * std::log(p0);
  }
  return loss;
}

}  // namespace genrt
