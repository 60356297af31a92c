// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <random>

#include "genrt/types.hpp"

using namespace genrt;

namespace {

QueryList make_list(const std::vector<double>& scores, int z = 2) {
  QueryList list;
  list.qid = "q";
  for (size_t i = 0; i < scores.size(); ++i) {
    FeatureDoc d;
    d.doc_id = "doc" + std::to_string(i);
    d.features = Vec::Zero(z);
    d.initial_score = scores[i];
    list.docs.push_back(std::move(d));
  }
  return list;
}

ModelConfig config_z(int z) {
  ModelConfig c;
  c.Z = z;
  return c;
}

}  // namespace

TEST_CASE("validate_query_list sorts by initial score descending") {
  QueryList out = validate_query_list(make_list({0.2, 0.9, 0.5}), config_z(2));
  REQUIRE(out.size() == 3);
  CHECK(out.docs[0].doc_id == "doc1");
  CHECK(out.docs[1].doc_id == "doc2");
  CHECK(out.docs[2].doc_id == "doc0");
}

TEST_CASE("validate_query_list truncates to max_list_len") {
  QueryList list = make_list(std::vector<double>(41, 0.0));
  for (size_t i = 0; i < list.docs.size(); ++i) {
    list.docs[i].initial_score = static_cast<double>(i);
  }
  ModelConfig c = config_z(2);
  c.max_list_len = 40;
  CHECK(validate_query_list(list, c).size() == 40);
}

TEST_CASE("equal scores break ties by doc_id ascending") {
  QueryList list;
  list.qid = "q";
  for (const char* id : {"b", "a"}) {
    FeatureDoc d;
    d.doc_id = id;
    d.features = Vec::Zero(1);
    d.initial_score = 1.0;
    list.docs.push_back(std::move(d));
  }
  QueryList out = validate_query_list(list, config_z(1));
  CHECK(out.docs[0].doc_id == "a");
  CHECK(out.docs[1].doc_id == "b");
}

TEST_CASE("validation is idempotent and permutation independent") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  QueryList list = make_list({});
  for (int i = 0; i < 12; ++i) {
    FeatureDoc d;
    d.doc_id = "d" + std::to_string(i);
    d.features = Vec::Zero(2);
    d.initial_score = i < 6 ? dist(rng) : list.docs[i - 6].initial_score;  // force ties
    list.docs.push_back(std::move(d));
  }
  ModelConfig c = config_z(2);
  QueryList canonical = validate_query_list(list, c);
  QueryList twice = validate_query_list(canonical, c);
  for (int i = 0; i < canonical.size(); ++i) {
    CHECK(canonical.docs[i].doc_id == twice.docs[i].doc_id);
  }
  for (int trial = 0; trial < 20; ++trial) {
    QueryList shuffled = list;
    std::shuffle(shuffled.docs.begin(), shuffled.docs.end(), rng);
    QueryList out = validate_query_list(shuffled, c);
    for (int i = 0; i < canonical.size(); ++i) {
      CHECK(out.docs[i].doc_id == canonical.docs[i].doc_id);
    }
  }
}

TEST_CASE("validation errors name the problem") {
  CHECK_THROWS_WITH_AS(validate_query_list(QueryList{"q7", {}}, config_z(2)),
                       doctest::Contains("empty query group"), std::runtime_error);

  QueryList list = make_list({0.1, 0.2});
  list.docs[1].features = Vec::Zero(3);
  CHECK_THROWS_WITH_AS(validate_query_list(list, config_z(2)), doctest::Contains("q"),
                       std::runtime_error);

  QueryList dup = make_list({0.1, 0.2});
  dup.docs[1].doc_id = dup.docs[0].doc_id;
  CHECK_THROWS_AS(validate_query_list(dup, config_z(2)), std::runtime_error);
}

TEST_CASE("model config round trips through key-value form") {
  ModelConfig c;
  c.Z = 7;
  c.E = 64;
  c.heads = 4;
  c.beta = 3;
  c.eta = 0.25;
  c.seed = 42;
  c.gamma_map = GammaMap::binary();
  ModelConfig back = ModelConfig::from_kv(c.to_kv());
  CHECK(serialize_kv(back.to_kv()) == serialize_kv(c.to_kv()));
}

TEST_CASE("unknown and invalid config keys are rejected") {
  CHECK_THROWS_WITH_AS(ModelConfig::from_kv({{"zz", "3"}}), doctest::Contains("unknown"),
                       std::invalid_argument);
  CHECK_THROWS_AS(ModelConfig::from_kv({{"e", "10"}, {"heads", "3"}}), std::invalid_argument);
  CHECK_THROWS_AS(ModelConfig::from_kv({{"eta", "1.5"}}), std::invalid_argument);
  CHECK_THROWS_AS(ModelConfig::from_kv({{"cut_threshold", "0"}}), std::invalid_argument);
  CHECK_THROWS_AS(ModelConfig::from_kv({{"beta", "-1"}}), std::invalid_argument);
}

TEST_CASE("gamma presets match the two datasets' conventions") {
  GammaMap web = GammaMap::web_search();
  CHECK(web.gain(0) == -4.0);
  CHECK(web.gain(1) == -2.0);
  CHECK(web.gain(2) == 2.0);
  CHECK(web.gain(3) == 3.0);
  CHECK(web.gain(4) == 4.0);
  GammaMap bin = GammaMap::binary();
  CHECK(bin.gain(0) == -1.0);
  CHECK(bin.gain(1) == 1.0);
  CHECK_THROWS(bin.gain(2));
  CHECK(GammaMap::parse("web").serialize() == web.serialize());
  CHECK(GammaMap::parse("0:-1,1:1").serialize() == bin.serialize());
}

TEST_CASE("kv file parser handles comments and rejects duplicates") {
  auto kv = parse_kv_file("a = 1\n# comment\n\nb = two words # trailing\n");
  CHECK(kv.at("a") == "1");
  CHECK(kv.at("b") == "two words");
  CHECK_THROWS_AS(parse_kv_file("a = 1\na = 2\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_kv_file("just text\n"), std::invalid_argument);
}

TEST_CASE("trace line serialization") {
  QueryList list = make_list({0.3, 0.2, 0.1});
  DecodeTrace trace;
  trace.qid = "q";
  trace.chosen = {1, 0};
  trace.cut_step = 2;
  trace.cut_probs = {{0.75, 0.25}, {0.4, 0.6}};
  CHECK(trace.to_line(list) == "q\tdoc1,doc0\t2\t0.25,0.6");
}
