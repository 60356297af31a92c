// SPDX-License-Identifier: Apache-2.0
#include "genrt/letor_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>

namespace genrt {

namespace {

void sort_group(QueryList& g) {
  std::stable_sort(g.docs.begin(), g.docs.end(), [](const FeatureDoc& a, const FeatureDoc& b) {
    if (a.initial_score != b.initial_score) return a.initial_score > b.initial_score;
    return a.doc_id < b.doc_id;
  });
}

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

struct RawDoc {
  std::vector<std::pair<int, double>> feats;  // 1-based index, value
  int label;
  std::string doc_id;
  double score;
};

}  // namespace

int Dataset::total_docs() const {
  int n = 0;
  for (const auto& g : groups) n += g.size();
  return n;
}

Dataset parse_letor(std::istream& in) {
  std::vector<std::string> qid_order;
  std::map<std::string, std::vector<RawDoc>> by_qid;
  int max_index = 0;
  int grade_max = 0;

  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string comment;
    auto hash = line.find('#');
    if (hash != std::string::npos) {
      comment = line.substr(hash + 1);
      line.resize(hash);
    }
    std::istringstream ls(line);
    std::string label_tok;
    if (!(ls >> label_tok)) continue;  // blank line

    auto fail = [&](const std::string& why) {
      throw std::runtime_error("letor line " + std::to_string(lineno) + ": " + why);
    };

    RawDoc doc;
    try {
      size_t pos = 0;
      doc.label = std::stoi(label_tok, &pos);
      if (pos != label_tok.size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      fail("label '" + label_tok + "' is not an integer");
    }
    if (doc.label < 0) fail("negative label");

    std::string qid_tok;
    if (!(ls >> qid_tok) || qid_tok.rfind("qid:", 0) != 0 || qid_tok.size() <= 4) {
      fail("expected qid:<id> after the label");
    }
    std::string qid = qid_tok.substr(4);

    std::string feat_tok;
    while (ls >> feat_tok) {
      auto colon = feat_tok.find(':');
      if (colon == std::string::npos || colon == 0 || colon + 1 == feat_tok.size()) {
        fail("malformed feature token '" + feat_tok + "'");
      }
      int idx = 0;
      double val = 0.0;
      try {
        size_t p1 = 0, p2 = 0;
        idx = std::stoi(feat_tok.substr(0, colon), &p1);
        std::string vs = feat_tok.substr(colon + 1);
        val = std::stod(vs, &p2);
        if (p1 != colon || p2 != vs.size()) throw std::invalid_argument("");
      } catch (const std::exception&) {
        fail("malformed feature token '" + feat_tok + "'");
      }
      if (idx < 1) fail("feature index must be >= 1");
      doc.feats.emplace_back(idx, val);
      max_index = std::max(max_index, idx);
    }

    doc.doc_id = qid + ":" + std::to_string(lineno);
    doc.score = 0.0;
    std::istringstream cs(comment);
    std::string ct;
    while (cs >> ct) {
      if (ct.rfind("docid=", 0) == 0) doc.doc_id = ct.substr(6);
      else if (ct.rfind("score=", 0) == 0) {
        try {
          doc.score = std::stod(ct.substr(6));
        } catch (const std::exception&) {
          fail("malformed score comment '" + ct + "'");
        }
      }
    }

    grade_max = std::max(grade_max, doc.label);
    if (!by_qid.count(qid)) qid_order.push_back(qid);
    by_qid[qid].push_back(std::move(doc));
  }

  Dataset ds;
  ds.Z = max_index;
  ds.grade_max = grade_max;
  for (const auto& qid : qid_order) {
    QueryList g;
    g.qid = qid;
    for (const auto& raw : by_qid[qid]) {
      FeatureDoc d;
      d.doc_id = raw.doc_id;
      d.label = raw.label;
      d.initial_score = raw.score;
      d.features = Vec::Zero(ds.Z);
      for (const auto& [idx, val] : raw.feats) d.features[idx - 1] = val;
      g.docs.push_back(std::move(d));
    }
    ds.groups.push_back(std::move(g));
  }
  return ds;
}

Dataset parse_letor_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open letor file '" + path + "'");
  return parse_letor(in);
}

Dataset attach_initial_scores(const Dataset& dataset, const Scorer& scorer) {
  Dataset out = dataset;
  for (auto& g : out.groups) {
    for (auto& d : g.docs) d.initial_score = scorer(d);
    sort_group(g);
  }
  return out;
}

Dataset generate_synthetic(int num_queries, int docs_per_query, int Z, int grade_max,
                           double noise_sigma, std::uint64_t seed) {
  if (num_queries < 1 || docs_per_query < 1 || Z < 1 || grade_max < 1) {
    throw std::invalid_argument("synthetic counts must be positive");
  }
  if (noise_sigma < 0.0) throw std::invalid_argument("noise_sigma must be >= 0");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  Vec w(Z);
  for (int j = 0; j < Z; ++j) w[j] = gauss(rng);
  // Features are U(-1,1), so w.x has std ~ sqrt(Z/3); rescale to ~3 so the
  // sigmoid link spreads labels over the whole grade range.
  const double scale = 3.0 / std::sqrt(static_cast<double>(Z) / 3.0);

  Dataset ds;
  ds.Z = Z;
  ds.grade_max = grade_max;
  for (int q = 0; q < num_queries; ++q) {
    QueryList g;
    g.qid = "synth" + std::to_string(q);
    for (int i = 0; i < docs_per_query; ++i) {
      FeatureDoc d;
      d.doc_id = g.qid + "_d" + std::to_string(i);
      d.features = Vec(Z);
      for (int j = 0; j < Z; ++j) d.features[j] = unit(rng);
      double t = scale * w.dot(d.features);
      double soft = static_cast<double>(grade_max) / (1.0 + std::exp(-t));
      d.label = std::clamp(static_cast<int>(std::lround(soft)), 0, grade_max);
      d.initial_score = t + (noise_sigma > 0.0 ? noise_sigma * gauss(rng) : 0.0);
      g.docs.push_back(std::move(d));
    }
    sort_group(g);
    ds.groups.push_back(std::move(g));
  }
  return ds;
}

void write_letor(const Dataset& dataset, std::ostream& out) {
  for (const auto& g : dataset.groups) {
    for (const auto& d : g.docs) {
      out << d.label << " qid:" << g.qid;
      for (int j = 0; j < d.features.size(); ++j) {
        if (d.features[j] != 0.0) out << ' ' << (j + 1) << ':' << fmt6(d.features[j]);
      }
      out << " #docid=" << d.doc_id << " score=" << fmt6(d.initial_score) << '\n';
      if (!out) throw std::runtime_error("letor write failed");
    }
  }
}

void write_letor_file(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_letor(dataset, out);
  out.flush();
  if (!out) throw std::runtime_error("letor write failed for '" + path + "'");
}

void resize_features(Dataset& dataset, int Z) {
  if (dataset.Z > Z) {
    throw std::runtime_error("dataset has " + std::to_string(dataset.Z) +
                             " features, model expects " + std::to_string(Z));
  }
  if (dataset.Z == Z) return;
  for (auto& g : dataset.groups) {
    for (auto& d : g.docs) {
      Vec padded = Vec::Zero(Z);
      padded.head(d.features.size()) = d.features;
      d.features = std::move(padded);
    }
  }
  dataset.Z = Z;
}

std::pair<Vec, Vec> standardize_features(Dataset& dataset) {
  const int Z = dataset.Z;
  Vec mean = Vec::Zero(Z), var = Vec::Zero(Z);
  long n = 0;
  for (const auto& g : dataset.groups) {
    for (const auto& d : g.docs) {
      mean += d.features;
      ++n;
    }
  }
  if (n == 0) return {Vec::Zero(Z), Vec::Ones(Z)};
  mean /= static_cast<double>(n);
  for (const auto& g : dataset.groups) {
    for (const auto& d : g.docs) {
      var += (d.features - mean).cwiseAbs2();
    }
  }
  var /= static_cast<double>(n);
  Vec std = var.cwiseSqrt();
  for (int j = 0; j < Z; ++j) {
    if (std[j] == 0.0) std[j] = 1.0;
  }
  apply_scaler(dataset, mean, std);
  return {mean, std};
}

void apply_scaler(Dataset& dataset, const Vec& mean, const Vec& std) {
  if (mean.size() != dataset.Z || std.size() != dataset.Z) {
    throw std::runtime_error("scaler dimension does not match dataset Z");
  }
  for (auto& g : dataset.groups) {
    for (auto& d : g.docs) {
      d.features = (d.features - mean).cwiseQuotient(std);
    }
  }
}

}  // namespace genrt
