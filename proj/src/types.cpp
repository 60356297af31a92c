// SPDX-License-Identifier: Apache-2.0
#include "genrt/types.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace genrt {

double GammaMap::gain(int label) const {
  auto it = mapping.find(label);
  if (it == mapping.end()) {
    throw std::runtime_error("gamma map has no entry for label " + std::to_string(label));
  }
  return it->second;
}

GammaMap GammaMap::web_search() {
  return GammaMap{{{0, -4.0}, {1, -2.0}, {2, 2.0}, {3, 3.0}, {4, 4.0}}};
}

GammaMap GammaMap::binary() { return GammaMap{{{0, -1.0}, {1, 1.0}}}; }

GammaMap GammaMap::parse(const std::string& text) {
  if (text == "web") return web_search();
  if (text == "binary") return binary();
  GammaMap g;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto colon = item.find(':');
    if (colon == std::string::npos) {
      throw std::invalid_argument("bad gamma_map entry '" + item + "' (want label:gain)");
    }
    g.mapping[std::stoi(item.substr(0, colon))] = std::stod(item.substr(colon + 1));
  }
  if (g.mapping.empty()) throw std::invalid_argument("empty gamma_map");
  return g;
}

std::string GammaMap::serialize() const {
  std::ostringstream out;
  bool first = true;
  for (const auto& [label, gain] : mapping) {
    if (!first) out << ',';
    first = false;
    out << label << ':' << gain;
  }
  return out.str();
}

void ModelConfig::validate() const {
  if (Z < 0) throw std::invalid_argument("Z must be >= 0");
  if (E <= 0 || heads <= 0 || E % heads != 0) {
    throw std::invalid_argument("E must be positive and divisible by heads");
  }
  if (encoder_blocks < 1 || decoder_blocks < 1) {
    throw std::invalid_argument("block counts must be >= 1");
  }
  if (beta < 0) throw std::invalid_argument("beta must be >= 0");
  if (eta < 0.0 || eta > 1.0) throw std::invalid_argument("eta must be in [0,1]");
  if (max_list_len < 1) throw std::invalid_argument("max_list_len must be >= 1");
  if (log_base <= 1.0) throw std::invalid_argument("log_base must be > 1");
  if (rel_pos_buckets < 2) throw std::invalid_argument("rel_pos_buckets must be >= 2");
  if (rel_pos_max_distance < 1) throw std::invalid_argument("rel_pos_max_distance must be >= 1");
  if (!(cut_threshold > 0.0 && cut_threshold < 1.0)) {
    throw std::invalid_argument("cut_threshold must be in (0,1)");
  }
}

namespace {

int to_int(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    int v = std::stoi(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': '" + value + "' is not an integer");
  }
}

double to_double(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': '" + value + "' is not a number");
  }
}

std::string fmt(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

ModelConfig ModelConfig::from_kv(const std::map<std::string, std::string>& kv) {
  ModelConfig c;
  for (const auto& [key, value] : kv) {
    if (key == "z") c.Z = to_int(key, value);
    else if (key == "e") c.E = to_int(key, value);
    else if (key == "heads") c.heads = to_int(key, value);
    else if (key == "encoder_blocks") c.encoder_blocks = to_int(key, value);
    else if (key == "decoder_blocks") c.decoder_blocks = to_int(key, value);
    else if (key == "beta") c.beta = to_int(key, value);
    else if (key == "eta") c.eta = to_double(key, value);
    else if (key == "max_list_len") c.max_list_len = to_int(key, value);
    else if (key == "lr") c.lr = to_double(key, value);
    else if (key == "batch_size") c.batch_size = to_int(key, value);
    else if (key == "log_base") c.log_base = to_double(key, value);
    else if (key == "rel_pos_buckets") c.rel_pos_buckets = to_int(key, value);
    else if (key == "rel_pos_max_distance") c.rel_pos_max_distance = to_int(key, value);
    else if (key == "gamma_map") c.gamma_map = GammaMap::parse(value);
    else if (key == "seed") c.seed = static_cast<std::uint64_t>(std::stoull(value));
    else if (key == "cut_threshold") c.cut_threshold = to_double(key, value);
    else throw std::invalid_argument("unknown model config key '" + key + "'");
  }
  c.validate();
  return c;
}

const std::vector<std::string>& ModelConfig::known_keys() {
  static const std::vector<std::string> keys = {
      "z",       "e",          "heads",           "encoder_blocks",
      "decoder_blocks", "beta", "eta",            "max_list_len",
      "lr",      "batch_size", "log_base",        "rel_pos_buckets",
      "rel_pos_max_distance",  "gamma_map",       "seed",
      "cut_threshold"};
  return keys;
}

std::map<std::string, std::string> ModelConfig::to_kv() const {
  std::map<std::string, std::string> kv;
  kv["z"] = std::to_string(Z);
  kv["e"] = std::to_string(E);
  kv["heads"] = std::to_string(heads);
  kv["encoder_blocks"] = std::to_string(encoder_blocks);
  kv["decoder_blocks"] = std::to_string(decoder_blocks);
  kv["beta"] = std::to_string(beta);
  kv["eta"] = fmt(eta);
  kv["max_list_len"] = std::to_string(max_list_len);
  kv["lr"] = fmt(lr);
  kv["batch_size"] = std::to_string(batch_size);
  kv["log_base"] = fmt(log_base);
  kv["rel_pos_buckets"] = std::to_string(rel_pos_buckets);
  kv["rel_pos_max_distance"] = std::to_string(rel_pos_max_distance);
  kv["gamma_map"] = gamma_map.serialize();
  kv["seed"] = std::to_string(seed);
  kv["cut_threshold"] = fmt(cut_threshold);
  return kv;
}

std::string DecodeTrace::to_line(const QueryList& list) const {
  std::ostringstream out;
  out << qid << '\t';
  for (size_t i = 0; i < chosen.size(); ++i) {
    if (i) out << ',';
    out << list.docs[chosen[i]].doc_id;
  }
  out << '\t' << cut_step << '\t';
  out.precision(9);
  for (size_t i = 0; i < cut_probs.size(); ++i) {
    if (i) out << ',';
    out << cut_probs[i].second;
  }
  return out.str();
}

QueryList validate_query_list(const QueryList& list, const ModelConfig& config) {
  if (list.docs.empty()) {
    throw std::runtime_error("empty query group (qid '" + list.qid + "')");
  }
  QueryList out = list;
  for (size_t i = 0; i < out.docs.size(); ++i) {
    const auto& d = out.docs[i];
    if (d.features.size() != config.Z) {
      throw std::runtime_error("feature length mismatch in qid '" + out.qid + "': doc '" +
                               d.doc_id + "' has " + std::to_string(d.features.size()) +
                               " features, expected " + std::to_string(config.Z));
    }
    if (d.label < 0) {
      throw std::runtime_error("negative label in qid '" + out.qid + "'");
    }
  }
  std::stable_sort(out.docs.begin(), out.docs.end(), [](const FeatureDoc& a, const FeatureDoc& b) {
    if (a.initial_score != b.initial_score) return a.initial_score > b.initial_score;
    return a.doc_id < b.doc_id;
  });
  for (size_t i = 1; i < out.docs.size(); ++i) {
    if (out.docs[i].doc_id == out.docs[i - 1].doc_id) {
      throw std::runtime_error("duplicate doc_id '" + out.docs[i].doc_id + "' in qid '" +
                               out.qid + "'");
    }
  }
  if (out.size() > config.max_list_len) {
    out.docs.resize(config.max_list_len);
  }
  return out;
}

std::map<std::string, std::string> parse_kv_file(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    auto issp = [](unsigned char ch) { return std::isspace(ch) != 0; };
    while (!s.empty() && issp(s.front())) s.erase(s.begin());
    while (!s.empty() && issp(s.back())) s.pop_back();
    return s;
  };
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
    }
    if (kv.count(key)) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
    kv[key] = value;
  }
  return kv;
}

std::string serialize_kv(const std::map<std::string, std::string>& kv) {
  std::ostringstream out;
  for (const auto& [key, value] : kv) {
    out << key << " = " << value << '\n';
  }
  return out.str();
}

}  // namespace genrt
