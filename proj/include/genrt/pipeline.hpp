// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "genrt/decoder.hpp"
#include "genrt/letor_io.hpp"
#include "genrt/metrics.hpp"
#include "genrt/params.hpp"

namespace genrt {

struct TruncationPolicy {
  enum class Kind { Model, Fixed, Oracle };
  Kind kind = Kind::Model;
  int x = 0;  // fixed cut position, >= 1

  /// "model" | "fixed:<x>" | "oracle"
  static TruncationPolicy parse(const std::string& text);
  std::string to_string() const;
};

/// Smallest x maximizing TDCG@x.
int oracle_cut(const std::vector<int>& labels_in_rank_order, const GammaMap& gamma,
               double log_base = 2.0);

struct PipelineResult {
  std::vector<QueryList> validated;  // canonical lists, trace-aligned
  std::vector<DecodeTrace> traces;
  EvalReport report;
};

/// Decodes every group and evaluates. The model policy uses the requested
/// decode mode; fixed and oracle cuts are applied on top of the model's
/// rerank-only order.
PipelineResult run_pipeline(const Dataset& dataset, const ModelParams& params,
                            const TruncationPolicy& policy, DecodeMode mode,
                            const EvalOptions& eval_options);

}  // namespace genrt
