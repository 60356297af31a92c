// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace genrt {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// One candidate document of a query's ranked list.
struct FeatureDoc {
  std::string doc_id;
  Vec features;           // length Z, dataset-wide
  int label = 0;          // graded relevance, >= 0
  double initial_score = 0.0;  // score l_i from the preceding ranking stage
};

/// A query's input ranked list. Canonical form is sorted by initial_score
/// descending, ties broken by doc_id ascending.
struct QueryList {
  std::string qid;
  std::vector<FeatureDoc> docs;

  int size() const { return static_cast<int>(docs.size()); }
};

/// Label -> gain table used by TDCG.
struct GammaMap {
  std::map<int, double> mapping;

  double gain(int label) const;

  // {0:-4, 1:-2, 2:2, 3:3, 4:4}
  static GammaMap web_search();
  // {0:-1, 1:1}
  static GammaMap binary();

  static GammaMap parse(const std::string& text);
  std::string serialize() const;
};

struct ModelConfig {
  int Z = 0;                      // input feature dimension (score column excluded)
  int E = 256;                    // attention dimension
  int heads = 8;
  int encoder_blocks = 2;
  int decoder_blocks = 1;
  int beta = 4;                   // local backward window size
  double eta = 0.1;               // weight of the sbs loss inside L_R
  int max_list_len = 40;
  double lr = 1e-5;
  int batch_size = 16;
  double log_base = 2.0;
  int rel_pos_buckets = 16;
  int rel_pos_max_distance = 64;
  GammaMap gamma_map = GammaMap::web_search();
  std::uint64_t seed = 0;
  double cut_threshold = 0.5;

  // Width of the embedded input rows: features plus the score column.
  int input_dim() const { return Z + 1; }

  /// Throws std::invalid_argument when an invariant is violated.
  void validate() const;

  /// Flat key-value round trip. Unknown keys are rejected.
  static ModelConfig from_kv(const std::map<std::string, std::string>& kv);
  std::map<std::string, std::string> to_kv() const;
  static const std::vector<std::string>& known_keys();
};

/// Per-query record of a decode run.
struct DecodeTrace {
  std::string qid;
  std::vector<int> chosen;                 // emitted doc indices, step order
  std::vector<Vec> score_matrices;         // S^t per executed step, masked entries at -1e9
  std::vector<std::pair<double, double>> cut_probs;  // (p_0, p_1) per executed step
  int cut_step = 0;                        // epsilon; N when the list was never cut

  /// qid <TAB> doc_ids <TAB> cut_step <TAB> per-step p_1, comma separated.
  std::string to_line(const QueryList& list) const;
};

/// Canonicalizes a query list: re-sorts by initial_score descending with the
/// doc_id tie-break, truncates to max_list_len, checks invariants. Idempotent.
QueryList validate_query_list(const QueryList& list, const ModelConfig& config);

/// Parses `key = value` lines; '#' starts a comment, blank lines skipped.
std::map<std::string, std::string> parse_kv_file(const std::string& text);
std::string serialize_kv(const std::map<std::string, std::string>& kv);

}  // namespace genrt
