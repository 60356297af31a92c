// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "genrt/types.hpp"

namespace genrt {

/// Gain 2^y - 1, discount 1/log(1+pos); IDCG from the same labels; 0 when
/// every label is zero.
double ndcg_at_k(const std::vector<int>& labels_in_rank_order, int k, double log_base = 2.0);

/// Expected reciprocal rank with stop probability (2^g - 1) / 2^grade_max.
double err_at_k(const std::vector<int>& labels_in_rank_order, int k, int grade_max);

/// Mean over relevant positions of precision at that position; relevance is
/// label >= threshold; 0 when nothing is relevant.
double average_precision(const std::vector<int>& labels_in_rank_order,
                         int relevance_threshold = 1);

struct EvalRow {
  std::string qid;
  double ndcg1 = 0, ndcg5 = 0, ndcg10 = 0;
  double err5 = 0, err10 = 0;
  double map = 0;
  double recall5 = 0, recall10 = 0;
  double tdcg = 0;
  int output_length = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;

  EvalRow mean() const;
  /// Header, one line per query, and a final mean row.
  std::string to_csv() const;
};

struct EvalOptions {
  GammaMap gamma = GammaMap::web_search();
  double log_base = 2.0;
  int relevance_threshold = 1;
  int grade_max = 4;
};

/// Ranking metrics on the generated order (ideal taken over the whole
/// candidate list), TDCG on the prefix at cut_step, output_length =
/// cut_step. Trace indices refer to the validated doc order of `list`.
EvalRow evaluate_trace(const DecodeTrace& trace, const QueryList& list,
                       const EvalOptions& options);

/// Per-step (lowest positive score - highest negative score) among the
/// candidates still unselected at that step; empty where a class is absent.
std::vector<std::optional<double>> min_margin_by_step(const DecodeTrace& trace,
                                                      const QueryList& list,
                                                      int relevance_threshold = 1);

/// Label distribution of the first excluded document (the doc ranked just
/// after the cut). Requires full-length traces that carry per-step cut
/// probabilities (decode in rerank_only mode); queries that were never cut
/// are skipped. Normalized over grades.
std::map<int, double> cutpoint_label_histogram(const std::vector<DecodeTrace>& traces,
                                               const std::vector<QueryList>& lists,
                                               double cut_threshold);

}  // namespace genrt
