// SPDX-License-Identifier: Apache-2.0
#include "genrt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "genrt/losses.hpp"

namespace genrt {

namespace {

double log_b(double x, double base) { return std::log(x) / std::log(base); }

double dcg_at_k(const std::vector<int>& labels, int k, double log_base) {
  double dcg = 0.0;
  const int upto = std::min<int>(k, static_cast<int>(labels.size()));
  for (int p = 0; p < upto; ++p) {
    dcg += (std::exp2(static_cast<double>(labels[p])) - 1.0) /
           log_b(static_cast<double>(p) + 2.0, log_base);
  }
  return dcg;
}

}  // namespace

double ndcg_at_k(const std::vector<int>& labels_in_rank_order, int k, double log_base) {
  if (k < 1) throw std::invalid_argument("ndcg: k must be >= 1");
  std::vector<int> ideal = labels_in_rank_order;
  std::sort(ideal.begin(), ideal.end(), std::greater<int>());
  double idcg = dcg_at_k(ideal, k, log_base);
  if (idcg == 0.0) return 0.0;
  return dcg_at_k(labels_in_rank_order, k, log_base) / idcg;
}

double err_at_k(const std::vector<int>& labels_in_rank_order, int k, int grade_max) {
  if (k < 1) throw std::invalid_argument("err: k must be >= 1");
  const double denom = std::exp2(static_cast<double>(grade_max));
  double err = 0.0;
  double not_stopped = 1.0;
  const int upto = std::min<int>(k, static_cast<int>(labels_in_rank_order.size()));
  for (int r = 0; r < upto; ++r) {
    double stop = (std::exp2(static_cast<double>(labels_in_rank_order[r])) - 1.0) / denom;
    err += not_stopped * stop / static_cast<double>(r + 1);
    not_stopped *= 1.0 - stop;
  }
  return err;
}

double average_precision(const std::vector<int>& labels_in_rank_order,
                         int relevance_threshold) {
  int relevant_seen = 0;
  double sum = 0.0;
  for (size_t p = 0; p < labels_in_rank_order.size(); ++p) {
    if (labels_in_rank_order[p] >= relevance_threshold) {
      ++relevant_seen;
      sum += static_cast<double>(relevant_seen) / static_cast<double>(p + 1);
    }
  }
  if (relevant_seen == 0) return 0.0;
  return sum / static_cast<double>(relevant_seen);
}

EvalRow EvalReport::mean() const {
  EvalRow m;
  m.qid = "mean";
  if (rows.empty()) return m;
  double len = 0.0;
  for (const auto& r : rows) {
    m.ndcg1 += r.ndcg1;
    m.ndcg5 += r.ndcg5;
    m.ndcg10 += r.ndcg10;
    m.err5 += r.err5;
    m.err10 += r.err10;
    m.map += r.map;
    m.recall5 += r.recall5;
    m.recall10 += r.recall10;
    m.tdcg += r.tdcg;
    len += r.output_length;
  }
  const double n = static_cast<double>(rows.size());
  m.ndcg1 /= n;
  m.ndcg5 /= n;
  m.ndcg10 /= n;
  m.err5 /= n;
  m.err10 /= n;
  m.map /= n;
  m.recall5 /= n;
  m.recall10 /= n;
  m.tdcg /= n;
  m.output_length = static_cast<int>(std::lround(len / n));
  return m;
}

namespace {

void append_row(std::ostringstream& out, const EvalRow& r) {
  out.precision(9);
  out << r.qid << ',' << r.ndcg1 << ',' << r.ndcg5 << ',' << r.ndcg10 << ',' << r.err5 << ','
      << r.err10 << ',' << r.map << ',' << r.recall5 << ',' << r.recall10 << ',' << r.tdcg
      << ',' << r.output_length << '\n';
}

}  // namespace

std::string EvalReport::to_csv() const {
  std::ostringstream out;
  out << "qid,ndcg@1,ndcg@5,ndcg@10,err@5,err@10,map,recall@5,recall@10,tdcg,output_length\n";
  for (const auto& r : rows) append_row(out, r);
  append_row(out, mean());
  return out.str();
}

EvalRow evaluate_trace(const DecodeTrace& trace, const QueryList& list,
                       const EvalOptions& options) {
  const int n = list.size();
  std::vector<int> universe(n);
  for (int i = 0; i < n; ++i) universe[i] = list.docs[i].label;

  std::vector<int> ranked;
  for (int idx : trace.chosen) {
    if (idx < 0 || idx >= n) {
      throw std::runtime_error("trace index out of range for qid '" + list.qid + "'");
    }
    ranked.push_back(universe[idx]);
  }

  std::vector<int> ideal = universe;
  std::sort(ideal.begin(), ideal.end(), std::greater<int>());

  auto ndcg = [&](int k) {
    double idcg = dcg_at_k(ideal, k, options.log_base);
    if (idcg == 0.0) return 0.0;
    return dcg_at_k(ranked, k, options.log_base) / idcg;
  };
  int total_relevant = 0;
  for (int y : universe) {
    if (y >= options.relevance_threshold) ++total_relevant;
  }
  auto recall = [&](int k) {
    if (total_relevant == 0) return 0.0;
    int hit = 0;
    for (int p = 0; p < std::min<int>(k, static_cast<int>(ranked.size())); ++p) {
      if (ranked[p] >= options.relevance_threshold) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(total_relevant);
  };

  EvalRow row;
  row.qid = trace.qid.empty() ? list.qid : trace.qid;
  row.ndcg1 = ndcg(1);
  row.ndcg5 = ndcg(5);
  row.ndcg10 = ndcg(10);
  row.err5 = err_at_k(ranked, 5, options.grade_max);
  row.err10 = err_at_k(ranked, 10, options.grade_max);
  row.map = average_precision(ranked, options.relevance_threshold);
  row.recall5 = recall(5);
  row.recall10 = recall(10);
  if (trace.cut_step < 1 || trace.cut_step > static_cast<int>(ranked.size())) {
    throw std::runtime_error("trace cut_step out of range for qid '" + list.qid + "'");
  }
  row.tdcg = tdcg(ranked, options.gamma, trace.cut_step, options.log_base);
  row.output_length = trace.cut_step;
  return row;
}

std::vector<std::optional<double>> min_margin_by_step(const DecodeTrace& trace,
                                                      const QueryList& list,
                                                      int relevance_threshold) {
  const int n = list.size();
  std::vector<bool> selected(n, false);
  std::vector<std::optional<double>> margins;
  for (size_t step = 0; step < trace.score_matrices.size(); ++step) {
    const Vec& s = trace.score_matrices[step];
    double min_pos = 0.0, max_neg = 0.0;
    bool has_pos = false, has_neg = false;
    for (int i = 0; i < n; ++i) {
      if (selected[i]) continue;
      if (list.docs[i].label >= relevance_threshold) {
        if (!has_pos || s[i] < min_pos) min_pos = s[i];
        has_pos = true;
      } else {
        if (!has_neg || s[i] > max_neg) max_neg = s[i];
        has_neg = true;
      }
    }
    if (has_pos && has_neg) {
      margins.emplace_back(min_pos - max_neg);
    } else {
      margins.emplace_back(std::nullopt);
    }
    if (step < trace.chosen.size()) selected[trace.chosen[step]] = true;
  }
  return margins;
}

std::map<int, double> cutpoint_label_histogram(const std::vector<DecodeTrace>& traces,
                                               const std::vector<QueryList>& lists,
                                               double cut_threshold) {
  if (traces.size() != lists.size()) {
    throw std::invalid_argument("histogram: traces and lists misaligned");
  }
  std::map<int, double> hist;
  double total = 0.0;
  for (size_t q = 0; q < traces.size(); ++q) {
    const DecodeTrace& trace = traces[q];
    if (trace.chosen.size() != static_cast<size_t>(lists[q].size()) ||
        trace.cut_probs.size() != trace.chosen.size()) {
      throw std::invalid_argument(
          "histogram needs full-length traces with per-step cut probabilities");
    }
    int cut = static_cast<int>(trace.chosen.size());
    for (size_t t = 0; t < trace.cut_probs.size(); ++t) {
      if (trace.cut_probs[t].second > cut_threshold) {
        cut = static_cast<int>(t) + 1;
        break;
      }
    }
    if (cut >= static_cast<int>(trace.chosen.size())) continue;  // never cut
    int label = lists[q].docs[trace.chosen[cut]].label;
    hist[label] += 1.0;
    total += 1.0;
  }
  if (total > 0.0) {
    for (auto& [label, mass] : hist) mass /= total;
  }
  return hist;
}

}  // namespace genrt
