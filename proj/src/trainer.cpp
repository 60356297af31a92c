// SPDX-License-Identifier: Apache-2.0
#include "genrt/trainer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "genrt/metrics.hpp"

namespace genrt {

namespace {

enum class Phase { Rerank, Truncate };

// Freeze group per flattened scalar: 0 shared, 1 truncation module, 2 rFFN.
std::vector<int> scalar_groups(const ModelParams& params) {
  std::vector<int> groups;
  groups.reserve(params.num_scalars());
  params.for_each([&](const std::string& name, const Mat& m) {
    int g = 0;
    if (is_truncation_param(name)) g = 1;
    else if (is_cross_rank_ffn_param(name)) g = 2;
    groups.insert(groups.end(), m.size(), g);
  });
  return groups;
}

struct Adam {
  Vec m, v;
  // Per-group step counts: a frozen group keeps its moments and bias
  // correction untouched.
  std::array<long, 3> steps{0, 0, 0};
  double lr;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  Adam(long n, double lr_) : m(Vec::Zero(n)), v(Vec::Zero(n)), lr(lr_) {}

  void step(Vec& theta, const Vec& grad, const std::vector<int>& groups, int frozen_group) {
    std::array<double, 3> corr1{}, corr2{};
    for (int g = 0; g < 3; ++g) {
      long t = steps[g] + (g == frozen_group ? 0 : 1);
      corr1[g] = 1.0 - std::pow(beta1, static_cast<double>(std::max<long>(t, 1)));
      corr2[g] = 1.0 - std::pow(beta2, static_cast<double>(std::max<long>(t, 1)));
    }
    for (int i = 0; i < theta.size(); ++i) {
      const int g = groups[i];
      if (g == frozen_group) continue;
      m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
      double mhat = m[i] / corr1[g];
      double vhat = v[i] / corr2[g];
      theta[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
    for (int g = 0; g < 3; ++g) {
      if (g != frozen_group) ++steps[g];
    }
  }
};

struct BatchGrad {
  Vec grad;
  double loss = 0.0;
};

// Mean loss and gradient of one batch for the given phase. Rollouts run to
// full length; the argmax selection itself carries no gradient.
BatchGrad batch_gradient(const std::vector<const QueryList*>& batch, const ModelParams& params,
                         Phase phase) {
  BatchGrad out;
  out.grad = Vec::Zero(params.num_scalars());
  const ModelConfig& cfg = params.config;
  for (const QueryList* list : batch) {
    Tape tape(/*grad_enabled=*/true);
    BoundParams bound = bind_params(tape, params);
    RolloutOptions options;
    options.with_truncation = phase == Phase::Truncate;
    options.stop_at_cut = false;
    TapeRollout roll = rollout_query(tape, bound, *list, options);

    std::vector<int> labels(list->size());
    for (int i = 0; i < list->size(); ++i) labels[i] = list->docs[i].label;
    std::vector<Var> scores;
    for (const auto& s : roll.steps) scores.push_back(s.scores);

    Var loss;
    if (phase == Phase::Rerank) {
      Var sa = sa_att_loss_on_tape(tape, scores, roll.chosen, labels, cfg.log_base);
      if (cfg.eta != 0.0) {
        Var sbs = sbs_loss_on_tape(tape, scores, roll.chosen, labels, cfg.log_base);
        loss = tape.add(sa, tape.scale(sbs, cfg.eta));
      } else {
        loss = sa;
      }
    } else {
      RolloutRecord record;
      record.chosen = roll.chosen;
      record.labels = labels;
      record.beta = cfg.beta;
      for (const auto& s : roll.steps) {
        record.score_matrices.push_back(tape.val(s.scores).row(0).transpose());
        record.step_rankings.push_back(s.ranking);
      }
      SoftCutLabels soft = soft_cut_labels(record, cfg.gamma_map, cfg.log_base);
      std::vector<Var> logits;
      for (const auto& s : roll.steps) logits.push_back(s.trunc_logits);
      loss = truncation_loss_on_tape(tape, logits, soft);
    }

    out.loss += tape.val(loss)(0, 0);
    tape.backward(loss);
    out.grad += collect_gradients(tape, bound, params);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  out.loss *= inv;
  out.grad *= inv;
  return out;
}

double mean_or_nan(double sum, int count) {
  return count > 0 ? sum / count : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (lr <= 0.0) throw std::invalid_argument("lr must be positive");
  if (checkpoint_every < 0) throw std::invalid_argument("checkpoint_every must be >= 0");
}

std::string history_to_csv(const std::vector<EpochStats>& history) {
  std::ostringstream out;
  out.precision(9);
  out << "epoch,phase,mean_lr,mean_lt,val_ndcg5,val_tdcg\n";
  for (const auto& h : history) {
    out << h.epoch << ',' << h.phase << ',' << h.mean_lr << ',';
    if (!std::isnan(h.mean_lt)) out << h.mean_lt;
    out << ',' << h.val_ndcg5 << ',' << h.val_tdcg << '\n';
  }
  return out.str();
}

TrainResult train(const Dataset& train_data, const Dataset& valid_data,
                  const ModelConfig& model_config, const TrainConfig& train_config,
                  const TrainState* resume) {
  model_config.validate();
  train_config.validate();
  if (train_data.groups.empty()) throw std::invalid_argument("empty training set");

  std::vector<QueryList> train_lists;
  for (const auto& g : train_data.groups) {
    QueryList v = validate_query_list(g, model_config);
    if (v.size() < 2) {
      throw std::invalid_argument("training lists need >= 2 docs (qid '" + g.qid + "')");
    }
    train_lists.push_back(std::move(v));
  }
  std::vector<QueryList> valid_lists;
  for (const auto& g : valid_data.groups) {
    valid_lists.push_back(validate_query_list(g, model_config));
  }

  ModelParams params = resume ? resume->params : ModelParams::init(model_config);
  if (resume && serialize_kv(params.config.to_kv()) != serialize_kv(model_config.to_kv())) {
    throw std::invalid_argument("resume state was trained with a different model config");
  }
  Vec theta = params.flatten();
  const std::vector<int> groups = scalar_groups(params);
  Adam adam(theta.size(), train_config.lr);
  std::mt19937_64 shuffle_rng(train_config.seed);
  int first_epoch = 1;
  if (resume) {
    if (resume->adam_m.size() != theta.size() || resume->adam_v.size() != theta.size()) {
      throw std::invalid_argument("resume state has a mismatched optimizer size");
    }
    adam.m = resume->adam_m;
    adam.v = resume->adam_v;
    adam.steps = resume->adam_steps;
    first_epoch = resume->next_epoch;
    std::istringstream rs(resume->rng_state);
    rs >> shuffle_rng;
    if (!rs) throw std::invalid_argument("resume state has a corrupt rng state");
  }

  EvalOptions eval_options;
  eval_options.gamma = model_config.gamma_map;
  eval_options.log_base = model_config.log_base;
  eval_options.grade_max = std::max(train_data.grade_max, 1);

  auto validate_now = [&](double& ndcg5, double& mean_tdcg) {
    ndcg5 = 0.0;
    mean_tdcg = 0.0;
    if (valid_lists.empty()) return;
    for (const auto& list : valid_lists) {
      DecodeTrace rr = decode(list, params, DecodeMode::RerankOnly);
      DecodeTrace full = decode(list, params, DecodeMode::Full);
      QueryList v = validate_query_list(list, model_config);
      ndcg5 += evaluate_trace(rr, v, eval_options).ndcg5;
      mean_tdcg += evaluate_trace(full, v, eval_options).tdcg;
    }
    ndcg5 /= static_cast<double>(valid_lists.size());
    mean_tdcg /= static_cast<double>(valid_lists.size());
  };

  TrainResult result;
  result.best_ndcg5 = -1.0;

  std::vector<int> order(train_lists.size());

  for (int epoch = first_epoch; epoch <= train_config.epochs; ++epoch) {
    // The epoch order is a function of the rng state alone, so a resumed
    // run shuffles identically to the uninterrupted one.
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double sum_lr = 0.0, sum_lt = 0.0;
    int n_rerank = 0, n_trunc = 0;

    int batch_index = 0;
    for (size_t at = 0; at < order.size(); at += train_config.batch_size, ++batch_index) {
      std::vector<const QueryList*> batch;
      for (size_t i = at; i < std::min(order.size(), at + train_config.batch_size); ++i) {
        batch.push_back(&train_lists[order[i]]);
      }
      const bool rerank_batch = epoch == 1 || batch_index % 2 == 0;
      const Phase phase = rerank_batch ? Phase::Rerank : Phase::Truncate;

      BatchGrad bg = batch_gradient(batch, params, phase);
      if (!std::isfinite(bg.loss)) {
        throw std::runtime_error("training diverged (non-finite loss) at epoch " +
                                 std::to_string(epoch) + " batch " +
                                 std::to_string(batch_index));
      }
      if (rerank_batch) {
        sum_lr += bg.loss;
        ++n_rerank;
      } else {
        sum_lt += bg.loss;
        ++n_trunc;
      }

      const int frozen = phase == Phase::Rerank ? 1 : 2;
      adam.step(theta, bg.grad, groups, frozen);
      params.unflatten(theta);
      if (train_config.on_batch_end) {
        train_config.on_batch_end(epoch, batch_index, rerank_batch ? "rerank" : "truncate",
                                  params);
      }
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.phase = epoch == 1 ? "rerank" : "alternate";
    stats.mean_lr = mean_or_nan(sum_lr, n_rerank);
    stats.mean_lt = mean_or_nan(sum_lt, n_trunc);
    validate_now(stats.val_ndcg5, stats.val_tdcg);
    result.history.push_back(stats);

    if (stats.val_ndcg5 > result.best_ndcg5) {
      result.best_ndcg5 = stats.val_ndcg5;
      result.best = params;
    }
    if (train_config.checkpoint_every > 0 && epoch % train_config.checkpoint_every == 0 &&
        !train_config.checkpoint_dir.empty()) {
      const std::string stem =
          train_config.checkpoint_dir + "/epoch" + std::to_string(epoch);
      save_checkpoint(params, stem + ".ckpt");
      TrainState state;
      state.params = params;
      state.adam_m = adam.m;
      state.adam_v = adam.v;
      state.adam_steps = adam.steps;
      state.next_epoch = epoch + 1;
      std::ostringstream rs;
      rs << shuffle_rng;
      state.rng_state = rs.str();
      save_train_state(state, stem + ".state");
    }
  }

  result.params = params;
  if (result.best_ndcg5 < 0.0) {
    result.best = params;
    result.best_ndcg5 = 0.0;
  }
  return result;
}

namespace {

constexpr const char* kStateMagic = "genrt-train-state-1";

void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

void write_vec(std::ostream& out, const Vec& v) {
  write_u64(out, static_cast<std::uint64_t>(v.size()));
  for (long i = 0; i < v.size(); ++i) {
    double d = v[i];
    out.write(reinterpret_cast<const char*>(&d), sizeof(d));
  }
}

Vec read_vec(std::istream& in) {
  Vec v(static_cast<long>(read_u64(in)));
  for (long i = 0; i < v.size(); ++i) {
    double d = 0.0;
    in.read(reinterpret_cast<char*>(&d), sizeof(d));
    v[i] = d;
  }
  return v;
}

}  // namespace

void save_train_state(const TrainState& state, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open train state '" + path + "' for writing");
  std::uint64_t magic_len = std::string(kStateMagic).size();
  write_u64(out, magic_len);
  out.write(kStateMagic, static_cast<std::streamsize>(magic_len));
  write_u64(out, static_cast<std::uint64_t>(state.next_epoch));
  write_u64(out, state.rng_state.size());
  out.write(state.rng_state.data(), static_cast<std::streamsize>(state.rng_state.size()));
  for (long s : state.adam_steps) write_u64(out, static_cast<std::uint64_t>(s));
  write_vec(out, state.adam_m);
  write_vec(out, state.adam_v);
  save_checkpoint(state.params, out);
  out.flush();
  if (!out) throw std::runtime_error("train state write failed for '" + path + "'");
}

TrainState load_train_state(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open train state '" + path + "'");
  std::string magic(static_cast<size_t>(read_u64(in)), '\0');
  in.read(magic.data(), static_cast<std::streamsize>(magic.size()));
  if (magic != kStateMagic) {
    throw std::runtime_error("'" + path + "' is not a " + std::string(kStateMagic) + " file");
  }
  TrainState state;
  state.next_epoch = static_cast<int>(read_u64(in));
  state.rng_state.resize(static_cast<size_t>(read_u64(in)));
  in.read(state.rng_state.data(), static_cast<std::streamsize>(state.rng_state.size()));
  for (long& s : state.adam_steps) s = static_cast<long>(read_u64(in));
  state.adam_m = read_vec(in);
  state.adam_v = read_vec(in);
  state.params = load_checkpoint(in, path);
  if (!in) throw std::runtime_error("train state '" + path + "' truncated");
  return state;
}

std::pair<std::vector<RolloutRecord>, std::vector<std::vector<std::pair<double, double>>>>
rollout_batch(const std::vector<QueryList>& lists, const ModelParams& params) {
  std::vector<RolloutRecord> records;
  std::vector<std::vector<std::pair<double, double>>> probs;
  for (const auto& list : lists) {
    QueryList validated = validate_query_list(list, params.config);
    Tape tape(/*grad_enabled=*/false);
    BoundParams bound = bind_params(tape, params);
    RolloutOptions options;
    options.with_truncation = true;
    options.stop_at_cut = false;
    TapeRollout roll = rollout_query(tape, bound, validated, options);

    RolloutRecord record;
    record.chosen = roll.chosen;
    record.beta = params.config.beta;
    record.labels.resize(validated.size());
    for (int i = 0; i < validated.size(); ++i) record.labels[i] = validated.docs[i].label;
    std::vector<std::pair<double, double>> cut;
    for (const auto& s : roll.steps) {
      record.score_matrices.push_back(tape.val(s.scores).row(0).transpose());
      record.step_rankings.push_back(s.ranking);
      cut.push_back(s.cut_prob);
    }
    records.push_back(std::move(record));
    probs.push_back(std::move(cut));
  }
  return {records, probs};
}

}  // namespace genrt
