// SPDX-License-Identifier: Apache-2.0
#include "genrt/pipeline.hpp"

#include <stdexcept>

#include "genrt/losses.hpp"

namespace genrt {

TruncationPolicy TruncationPolicy::parse(const std::string& text) {
  TruncationPolicy p;
  if (text == "model") {
    p.kind = Kind::Model;
  } else if (text == "oracle") {
    p.kind = Kind::Oracle;
  } else if (text.rfind("fixed:", 0) == 0) {
    p.kind = Kind::Fixed;
    try {
      p.x = std::stoi(text.substr(6));
    } catch (const std::exception&) {
      throw std::invalid_argument("bad fixed policy '" + text + "'");
    }
    if (p.x < 1) throw std::invalid_argument("fixed policy needs x >= 1");
  } else {
    throw std::invalid_argument("unknown policy '" + text + "' (model|fixed:<x>|oracle)");
  }
  return p;
}

std::string TruncationPolicy::to_string() const {
  switch (kind) {
    case Kind::Model: return "model";
    case Kind::Fixed: return "fixed:" + std::to_string(x);
    case Kind::Oracle: return "oracle";
  }
  return "?";
}

int oracle_cut(const std::vector<int>& labels_in_rank_order, const GammaMap& gamma,
               double log_base) {
  if (labels_in_rank_order.empty()) throw std::invalid_argument("oracle_cut: empty list");
  int best_x = 1;
  double best = tdcg(labels_in_rank_order, gamma, 1, log_base);
  for (int x = 2; x <= static_cast<int>(labels_in_rank_order.size()); ++x) {
    double v = tdcg(labels_in_rank_order, gamma, x, log_base);
    if (v > best) {
      best = v;
      best_x = x;
    }
  }
  return best_x;
}

PipelineResult run_pipeline(const Dataset& dataset, const ModelParams& params,
                            const TruncationPolicy& policy, DecodeMode mode,
                            const EvalOptions& eval_options) {
  PipelineResult result;
  for (const auto& group : dataset.groups) {
    QueryList validated = validate_query_list(group, params.config);

    DecodeTrace trace;
    if (policy.kind == TruncationPolicy::Kind::Model) {
      trace = decode(validated, params, mode);
    } else {
      // Baselines cut the model's own rerank-only order.
      trace = decode(validated, params, DecodeMode::RerankOnly);
      const int n = validated.size();
      if (policy.kind == TruncationPolicy::Kind::Fixed) {
        trace.cut_step = std::min(policy.x, n);
      } else {
        std::vector<int> ranked(n);
        for (int i = 0; i < n; ++i) ranked[i] = validated.docs[trace.chosen[i]].label;
        trace.cut_step = oracle_cut(ranked, eval_options.gamma, eval_options.log_base);
      }
    }

    result.report.rows.push_back(evaluate_trace(trace, validated, eval_options));
    result.traces.push_back(std::move(trace));
    result.validated.push_back(std::move(validated));
  }
  return result;
}

}  // namespace genrt
