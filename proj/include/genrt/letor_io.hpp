// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "genrt/types.hpp"

namespace genrt {

/// A parsed LETOR corpus: one group per qid, shared feature dimension.
struct Dataset {
  std::vector<QueryList> groups;
  int Z = 0;
  int grade_max = 0;

  int total_docs() const;
};

using Scorer = std::function<double(const FeatureDoc&)>;

/// Parses `<label> qid:<id> <idx>:<val> ... [#comment]` lines. Feature
/// indices are 1-based and may be sparse; missing entries are filled with
/// 0.0. Comment tokens `docid=<id>` and `score=<val>` set the document id
/// and initial score; otherwise doc_id is "<qid>:<line ordinal>" and the
/// score defaults to 0.0. Docs stay in file order.
Dataset parse_letor(std::istream& in);
Dataset parse_letor_file(const std::string& path);

/// Replaces every initial_score with scorer output and re-sorts each group
/// by score descending (doc_id tie-break).
Dataset attach_initial_scores(const Dataset& dataset, const Scorer& scorer);

/// Deterministic synthetic corpus. A seed-derived weight vector w drives
/// both labels (clamp(round(grade_max * sigmoid(scale * w.x)))) and initial
/// scores (scale * w.x + Gaussian noise of width noise_sigma), so with zero
/// noise the input order already sorts labels non-increasingly.
Dataset generate_synthetic(int num_queries, int docs_per_query, int Z, int grade_max,
                           double noise_sigma, std::uint64_t seed);

/// Writes LETOR lines with `#docid=... score=...` comments; floats at six
/// significant digits, so parse(write(d)) == d up to that formatting.
void write_letor(const Dataset& dataset, std::ostream& out);
void write_letor_file(const Dataset& dataset, const std::string& path);

/// Pads every doc's feature vector with zeros up to Z (sparse files may
/// simply never mention trailing features). Throws if the dataset is wider.
void resize_features(Dataset& dataset, int Z);

/// Shifts and scales every feature column to zero mean, unit variance over
/// the dataset (columns with zero variance are left centered only).
/// Returns the per-column mean and std used.
std::pair<Vec, Vec> standardize_features(Dataset& dataset);
/// Applies a previously computed scaler.
void apply_scaler(Dataset& dataset, const Vec& mean, const Vec& std);

}  // namespace genrt
