// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "genrt/encoder.hpp"
#include "genrt/params.hpp"
#include "genrt/types.hpp"

namespace genrt {

enum class DecodeMode { Full, RerankOnly, TruncateOnly, Fast };

DecodeMode parse_decode_mode(const std::string& name);
std::string to_string(DecodeMode mode);

/// Symmetric T5-style bucketing of a relative offset: half the buckets per
/// direction, exact for small distances, log-spaced up to max_distance.
int rel_pos_bucket(int relative_position, int num_buckets, int max_distance);

/// Sequential dependency vector m for the current step: the transfer
/// projection of the start vector when the prefix is empty, otherwise the
/// last row of the prefix self-attention over the chosen docs' embeddings
/// (run through the shared transfer map).
Var sequential_dependency(Tape& tape, const BoundParams& p, Var U,
                          const std::vector<int>& chosen_prefix);

/// Latent cross, (1 + MLP(O)) .* FFN-Swish(U). Step-independent.
Var latent_cross(Tape& tape, const BoundParams& p, Var U, Var O);

/// Cross ranking FFN scores: rFFN(concat(I, M)) with m tiled into M.
/// Returns a 1 x N row with already-selected entries pinned at -1e9.
Var score_candidates(Tape& tape, const BoundParams& p, Var I, Var m,
                     const std::vector<bool>& selected);

/// Sorts unmasked candidates by score descending, ties toward the lower
/// index. Throws "decode exhausted" when everything is masked.
std::vector<int> dynamic_rank(const Vec& scores, const std::vector<bool>& selected);

/// Truncation head at the current step. `prefix` are the docs chosen before
/// this step, `current` the doc just emitted, `window` the backward-window
/// doc indices. Returns the 1 x 2 logits (softmax on top gives (p_0, p_1)).
Var truncation_logits(Tape& tape, const BoundParams& p, Var O, const std::vector<int>& prefix,
                      int current, const std::vector<int>& window);

/// One executed generation step of a rollout.
struct StepRecord {
  Var scores;                      // 1 x N, masked entries at -1e9
  Var trunc_logits;                // 1 x 2; invalid when truncation skipped
  std::vector<int> ranking;        // R^t: unmasked candidates, best first
  std::pair<double, double> cut_prob{0.0, 0.0};
};

struct TapeRollout {
  EncoderOutput enc;
  std::vector<StepRecord> steps;
  std::vector<int> chosen;  // emitted doc per executed step
  int cut_step = 0;         // first step with p_1 > threshold, else N
};

struct RolloutOptions {
  bool with_truncation = true;
  bool stop_at_cut = false;
  bool follow_input_order = false;  // truncate-only: emit docs in input order
  // When set, step t uses exactly forced[t] as its candidate ranking instead
  // of sorting scores. Keeps the compute graph fixed for gradient checks.
  const std::vector<std::vector<int>>* forced_rankings = nullptr;
};

/// Runs the generation loop on an already-validated list.
TapeRollout rollout_query(Tape& tape, const BoundParams& p, const QueryList& validated,
                          const RolloutOptions& options);

/// Validates the list and decodes it in the given mode on a value-only tape.
/// Trace indices refer to the validated (canonical) doc order.
DecodeTrace decode(const QueryList& list, const ModelParams& params, DecodeMode mode);

}  // namespace genrt
