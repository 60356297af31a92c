// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <random>

#include "genrt/losses.hpp"
#include "test_util.hpp"

using namespace genrt;

namespace {

// Full-length rollout over n docs with random scores.
RolloutRecord random_rollout(int n, std::mt19937_64& rng, int beta = 2) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_int_distribution<int> grade(0, 4);
  RolloutRecord r;
  r.beta = beta;
  for (int i = 0; i < n; ++i) r.labels.push_back(grade(rng));
  std::vector<bool> selected(n, false);
  for (int step = 0; step < n; ++step) {
    Vec s(n);
    for (int i = 0; i < n; ++i) s[i] = selected[i] ? -1e9 : unit(rng);
    int best = -1;
    for (int i = 0; i < n; ++i) {
      if (!selected[i] && (best < 0 || s[i] > s[best])) best = i;
    }
    r.score_matrices.push_back(s);
    r.chosen.push_back(best);
    selected[best] = true;
  }
  return r;
}

// Literal translation of the attention-loss formulas, kept independent of
// the library implementation.
double naive_sa_att(const RolloutRecord& r) {
  const int n = static_cast<int>(r.labels.size());
  double total = 0.0;
  for (size_t step = 0; step < r.score_matrices.size(); ++step) {
    std::vector<bool> sel(n, false);
    for (size_t i = 0; i < step; ++i) sel[r.chosen[i]] = true;
    auto dist = [&](const std::vector<double>& raw) {
      std::vector<double> phi(n);
      for (int i = 0; i < n; ++i) phi[i] = sel[i] ? -1e4 : raw[i];
      double m = *std::max_element(phi.begin(), phi.end());
      double z = 0.0;
      for (double v : phi) z += std::exp(v - m);
      std::vector<double> p(n);
      for (int i = 0; i < n; ++i) p[i] = std::exp(phi[i] - m) / z;
      return p;
    };
    std::vector<double> raw_labels(n), raw_scores(n);
    for (int i = 0; i < n; ++i) {
      raw_labels[i] = r.labels[i];
      raw_scores[i] = r.score_matrices[step][i];
    }
    auto a = dist(raw_labels);
    auto b = dist(raw_scores);
    double ce = 0.0;
    for (int i = 0; i < n; ++i) {
      if (a[i] > 0.0) ce -= a[i] * std::log(b[i]);
    }
    total += ce / std::log2(2.0 + static_cast<double>(step));
  }
  return total;
}

}  // namespace

TEST_CASE("attention targets") {
  SUBCASE("labels [4,0], none selected") {
    Vec a = attention_targets({4, 0}, {false, false});
    CHECK(a[0] == doctest::Approx(0.98201).epsilon(1e-4));
    CHECK(a[1] == doctest::Approx(0.01799).epsilon(1e-3));
    CHECK(a.sum() == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("selected docs carry essentially no mass") {
    Vec a = attention_targets({4, 0}, {true, false});
    CHECK(a[0] < 1e-30);
    CHECK(a[1] == doctest::Approx(1.0));
  }
  SUBCASE("equal labels give the uniform distribution") {
    Vec a = attention_targets({2, 2, 2, 2}, std::vector<bool>(4, false));
    for (int i = 0; i < 4; ++i) CHECK(a[i] == doctest::Approx(0.25));
  }
}

TEST_CASE("step-adaptive attention loss") {
  SUBCASE("scores equal to labels reach the entropy lower bound") {
    RolloutRecord r;
    r.labels = {3, 1, 0};
    r.beta = 0;
    std::vector<bool> sel(3, false);
    // greedy by label, scores == labels with selected masked at -1e9
    std::vector<int> order{0, 1, 2};
    for (int step = 0; step < 3; ++step) {
      Vec s(3);
      for (int i = 0; i < 3; ++i) s[i] = sel[i] ? -1e9 : r.labels[i];
      r.score_matrices.push_back(s);
      r.chosen.push_back(order[step]);
      sel[order[step]] = true;
    }
    double loss = step_adaptive_attention_loss(r);
    // per-step entropy of the target distribution, alpha-weighted
    double expected = 0.0;
    for (int step = 0; step < 3; ++step) {
      std::vector<bool> mask(3, false);
      for (int i = 0; i < step; ++i) mask[order[i]] = true;
      Vec a = attention_targets(r.labels, mask);
      double h = 0.0;
      for (int i = 0; i < 3; ++i) {
        if (a[i] > 0.0) h -= a[i] * std::log(a[i]);
      }
      expected += h / std::log2(2.0 + step);
    }
    CHECK(loss == doctest::Approx(expected).epsilon(1e-9));
  }
  SUBCASE("matches a naive reimplementation on random rollouts") {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 25; ++trial) {
      RolloutRecord r = random_rollout(2 + static_cast<int>(rng() % 6), rng);
      CHECK(step_adaptive_attention_loss(r) == doctest::Approx(naive_sa_att(r)).epsilon(1e-9));
    }
  }
  SUBCASE("a single-candidate final step contributes zero") {
    RolloutRecord r;
    r.labels = {2, 3};
    r.beta = 0;
    Vec s0(2), s1(2);
    s0 << 3.0, 1.0;
    s1 << -1e9, 1.0;
    r.score_matrices = {s0, s1};
    r.chosen = {0, 1};
    RolloutRecord first_only = r;
    first_only.score_matrices.resize(1);
    first_only.chosen.resize(1);
    CHECK(step_adaptive_attention_loss(r) ==
          doctest::Approx(step_adaptive_attention_loss(first_only)).epsilon(1e-12));
  }
}

TEST_CASE("sbs lambda loss") {
  SUBCASE("zero when sequence labels are non-increasing") {
    std::mt19937_64 rng(5);
    RolloutRecord r = random_rollout(5, rng);
    std::vector<int> sorted_labels = r.labels;
    std::sort(sorted_labels.rbegin(), sorted_labels.rend());
    // force chosen order to walk labels in non-increasing order
    std::vector<int> order(5);
    std::vector<bool> used(5, false);
    for (int step = 0; step < 5; ++step) {
      for (int i = 0; i < 5; ++i) {
        if (!used[i] && r.labels[i] == sorted_labels[step]) {
          order[step] = i;
          used[i] = true;
          break;
        }
      }
    }
    r.chosen = order;
    CHECK(sbs_lambda_loss(r) == 0.0);
  }
  SUBCASE("worked two-document example") {
    RolloutRecord r;
    r.labels = {2, 3};
    r.beta = 0;
    Vec s0(2), s1(2);
    s0 << 0.5, 0.5;
    s1 << -1e9, 0.5;
    r.score_matrices = {s0, s1};
    r.chosen = {0, 1};
    // DCG = 3 + 7/log2(3) = 7.41650, swapped = 8.89281 = IDCG
    CHECK(delta_ndcg({2, 3}, 0, 1) == doctest::Approx(0.16601).epsilon(1e-4));
    CHECK(sbs_lambda_loss(r) == doctest::Approx(0.16601 * std::log(2.0)).epsilon(1e-4));
    CHECK(sbs_lambda_loss(r) == doctest::Approx(0.11507).epsilon(1e-4));
  }
  SUBCASE("adding a constant to every score changes nothing") {
    std::mt19937_64 rng(6);
    RolloutRecord r = random_rollout(6, rng);
    double base = sbs_lambda_loss(r);
    RolloutRecord shifted = r;
    for (auto& s : shifted.score_matrices) {
      for (int i = 0; i < s.size(); ++i) {
        if (s[i] > -1e8) s[i] += 3.7;
      }
    }
    CHECK(sbs_lambda_loss(shifted) == doctest::Approx(base).epsilon(1e-9));
  }
}

TEST_CASE("rerank loss combines the two parts") {
  std::mt19937_64 rng(8);
  RolloutRecord r = random_rollout(5, rng);
  double sa = step_adaptive_attention_loss(r);
  double sbs = sbs_lambda_loss(r);
  CHECK(rerank_loss(r, 0.0) == doctest::Approx(sa).epsilon(1e-12));
  CHECK(rerank_loss(r, 0.1) == doctest::Approx(sa + 0.1 * sbs).epsilon(1e-12));
}

TEST_CASE("tdcg worked examples") {
  GammaMap web = GammaMap::web_search();
  std::vector<int> labels{3, 2, 0};
  CHECK(tdcg(labels, web, 1) == doctest::Approx(3.0));
  CHECK(tdcg(labels, web, 2) == doctest::Approx(4.262).epsilon(1e-3));
  CHECK(tdcg(labels, web, 3) == doctest::Approx(2.262).epsilon(1e-3));
  CHECK_THROWS_AS(tdcg(labels, web, 0), std::invalid_argument);
  CHECK_THROWS_AS(tdcg(labels, web, 4), std::invalid_argument);

  std::vector<int> zeros(6, 0);
  double prev = 0.0;
  for (int x = 1; x <= 6; ++x) {
    double v = tdcg(zeros, web, x);
    CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("soft cut labels") {
  GammaMap web = GammaMap::web_search();

  SUBCASE("worked example at the first step") {
    // T=1, beta=2, local labels [3, 2, 0]
    RolloutRecord r;
    r.labels = {3, 2, 0};
    r.beta = 2;
    Vec s0(3);
    s0 << 3.0, 2.0, 0.0;
    r.score_matrices = {s0};
    r.chosen = {0};
    SoftCutLabels labels = soft_cut_labels(r, web);
    REQUIRE(labels.size() == 1);
    CHECK(labels[0].first == doctest::Approx(0.6765).epsilon(1e-3));
    CHECK(labels[0].second == doctest::Approx(0.3235).epsilon(1e-3));
  }
  SUBCASE("equal rewards give (0.5, 0.5) and the last step is always equal") {
    std::mt19937_64 rng(10);
    RolloutRecord r = random_rollout(4, rng);
    SoftCutLabels labels = soft_cut_labels(r, web);
    REQUIRE(labels.size() == 4);
    CHECK(labels[3].first == 0.5);
    CHECK(labels[3].second == 0.5);
    for (const auto& [cut, nocut] : labels) {
      CHECK(cut + nocut == 1.0);  // exact by construction
    }
  }
  SUBCASE("a high-relevance window pushes against cutting") {
    RolloutRecord r;
    r.labels = {4, 4, 4};
    r.beta = 2;
    Vec s0(3);
    s0 << 3.0, 2.0, 1.0;
    r.score_matrices = {s0};
    r.chosen = {0};
    SoftCutLabels labels = soft_cut_labels(r, web);
    CHECK(labels[0].second > labels[0].first);
  }
}

TEST_CASE("truncation loss") {
  SUBCASE("matching probabilities reach the entropy lower bound") {
    SoftCutLabels labels{{0.7, 0.3}, {0.2, 0.8}};
    std::vector<std::pair<double, double>> probs{{0.3, 0.7}, {0.8, 0.2}};
    double expected = 0.0;
    for (const auto& [c, nc] : labels) {
      expected -= c * std::log(c) + nc * std::log(nc);
    }
    CHECK(truncation_loss(probs, labels) == doctest::Approx(expected).epsilon(1e-9));
  }
  SUBCASE("a certain, correct step contributes zero") {
    SoftCutLabels labels{{1.0, 0.0}};
    std::vector<std::pair<double, double>> probs{{0.0, 1.0}};
    CHECK(truncation_loss(probs, labels) == doctest::Approx(0.0));
  }
  SUBCASE("maximal uncertainty costs ln 2 per step") {
    SoftCutLabels labels{{0.5, 0.5}};
    std::vector<std::pair<double, double>> probs{{0.5, 0.5}};
    CHECK(truncation_loss(probs, labels) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
  SUBCASE("zero probabilities are clamped, not infinite") {
    SoftCutLabels labels{{0.5, 0.5}};
    std::vector<std::pair<double, double>> probs{{0.0, 0.0}};
    CHECK(std::isfinite(truncation_loss(probs, labels)));
  }
}

TEST_CASE("losses are non-negative and finite on random rollouts") {
  std::mt19937_64 rng(12);
  GammaMap web = GammaMap::web_search();
  for (int trial = 0; trial < 20; ++trial) {
    RolloutRecord r = random_rollout(2 + static_cast<int>(rng() % 7), rng);
    double sa = step_adaptive_attention_loss(r);
    double sbs = sbs_lambda_loss(r);
    CHECK(sa >= 0.0);
    CHECK(std::isfinite(sa));
    CHECK(sbs >= 0.0);
    CHECK(std::isfinite(sbs));
    SoftCutLabels labels = soft_cut_labels(r, web);
    std::vector<std::pair<double, double>> probs;
    std::uniform_real_distribution<double> unit(0.05, 0.95);
    for (size_t i = 0; i < labels.size(); ++i) {
      double p1 = unit(rng);
      probs.emplace_back(1.0 - p1, p1);
    }
    double lt = truncation_loss(probs, labels);
    CHECK(lt >= 0.0);
    CHECK(std::isfinite(lt));
  }
}

TEST_CASE("tape and value losses agree") {
  std::mt19937_64 rng(14);
  GammaMap web = GammaMap::web_search();
  RolloutRecord r = random_rollout(5, rng);

  Tape t;
  std::vector<Var> scores;
  for (const auto& s : r.score_matrices) scores.push_back(t.leaf(s.transpose()));
  Var sa = sa_att_loss_on_tape(t, scores, r.chosen, r.labels);
  Var sbs = sbs_loss_on_tape(t, scores, r.chosen, r.labels);
  CHECK(t.val(sa)(0, 0) == doctest::Approx(step_adaptive_attention_loss(r)).epsilon(1e-12));
  CHECK(t.val(sbs)(0, 0) == doctest::Approx(sbs_lambda_loss(r)).epsilon(1e-12));

  SoftCutLabels labels = soft_cut_labels(r, web);
  std::vector<Var> logits;
  std::vector<std::pair<double, double>> probs;
  std::uniform_real_distribution<double> unit(-2.0, 2.0);
  for (size_t i = 0; i < labels.size(); ++i) {
    Mat l(1, 2);
    l << unit(rng), unit(rng);
    logits.push_back(t.leaf(l));
    double m = std::max(l(0, 0), l(0, 1));
    double e0 = std::exp(l(0, 0) - m), e1 = std::exp(l(0, 1) - m);
    probs.emplace_back(e0 / (e0 + e1), e1 / (e0 + e1));
  }
  Var lt = truncation_loss_on_tape(t, logits, labels);
  CHECK(t.val(lt)(0, 0) == doctest::Approx(truncation_loss(probs, labels)).epsilon(1e-9));
}
