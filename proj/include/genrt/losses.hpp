// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <utility>
#include <vector>

#include "genrt/autodiff.hpp"
#include "genrt/types.hpp"

namespace genrt {

/// A generated reranking rollout with everything the training objectives
/// need. During training the sequence always runs the full list length.
struct RolloutRecord {
  std::vector<int> chosen;          // r_1^1 .. r_1^eps, doc indices
  std::vector<Vec> score_matrices;  // S^t, masked entries at -1e9
  std::vector<int> labels;          // per input doc, index-aligned
  int beta = 0;
  // R^t per step; derived from the score matrices when left empty.
  std::vector<std::vector<int>> step_rankings;
};

/// (y_cut, y_nocut) per step; pairs sum to exactly 1.
using SoftCutLabels = std::vector<std::pair<double, double>>;

/// Ground-truth attention distribution of Eq-style phi masking: selected
/// docs get -1e4, the rest their label, then softmax.
Vec attention_targets(const std::vector<int>& labels, const std::vector<bool>& selected);

/// Per-step cross entropy between the label attention distribution and the
/// score attention distribution, weighted by 1/log(1+t).
double step_adaptive_attention_loss(const RolloutRecord& rollout, double log_base = 2.0);

/// Pairwise logistic penalty on relevance-inverted pairs of the generated
/// sequence, weighted by the NDCG swap delta. Zero when the sequence labels
/// are non-increasing.
double sbs_lambda_loss(const RolloutRecord& rollout, double log_base = 2.0);

/// L_R = L_sa-att + eta * L_sbs.
double rerank_loss(const RolloutRecord& rollout, double eta, double log_base = 2.0);

/// Truncated DCG: sum_{t=1..x} gamma(y_t) / log(t+1). x is 1-based.
double tdcg(const std::vector<int>& labels_in_rank_order, const GammaMap& gamma, int x,
            double log_base = 2.0);

/// RAML binary soft labels: softmax over (TDCG@T, TDCG@(T+window)) on the
/// local list prefix + current + backward window.
SoftCutLabels soft_cut_labels(const RolloutRecord& rollout, const GammaMap& gamma,
                              double log_base = 2.0);

/// Soft binary cross entropy over the per-step cut distributions;
/// probabilities are clamped at 1e-12 before the log.
double truncation_loss(const std::vector<std::pair<double, double>>& cut_probs,
                       const SoftCutLabels& soft_labels);

/// |NDCG_swap - NDCG| of swapping positions i and j (0-based) of the
/// generated sequence, gain 2^y - 1, discount 1/log(1+pos).
double delta_ndcg(const std::vector<int>& sequence_labels, int i, int j,
                  double log_base = 2.0);

// Tape builders used by the trainer; the value-level functions above agree
// with them by construction (the attention and sbs losses evaluate through
// the same builders).
Var sa_att_loss_on_tape(Tape& tape, std::span<const Var> step_scores,
                        const std::vector<int>& chosen, const std::vector<int>& labels,
                        double log_base = 2.0);
Var sbs_loss_on_tape(Tape& tape, std::span<const Var> step_scores,
                     const std::vector<int>& chosen, const std::vector<int>& labels,
                     double log_base = 2.0);
Var truncation_loss_on_tape(Tape& tape, std::span<const Var> step_logits,
                            const SoftCutLabels& soft_labels);

}  // namespace genrt
