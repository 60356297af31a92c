// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "genrt/decoder.hpp"
#include "genrt/letor_io.hpp"
#include "genrt/losses.hpp"
#include "genrt/params.hpp"

namespace genrt {

struct TrainConfig {
  int epochs = 1;
  int batch_size = 16;
  double lr = 1e-5;
  int checkpoint_every = 0;  // 0 disables periodic checkpoints
  std::uint64_t seed = 0;
  std::string checkpoint_dir;  // used when checkpoint_every > 0

  /// Test instrumentation: called after every optimizer step.
  std::function<void(int epoch, int batch_index, const std::string& phase,
                     const ModelParams& params)>
      on_batch_end;

  void validate() const;
};

/// Everything needed to continue training exactly where an epoch ended:
/// parameters, Adam moments and per-group step counts, the shuffle RNG
/// state, and the next epoch to run.
struct TrainState {
  ModelParams params;
  Vec adam_m, adam_v;
  std::array<long, 3> adam_steps{0, 0, 0};
  int next_epoch = 1;
  std::string rng_state;
};

void save_train_state(const TrainState& state, const std::string& path);
TrainState load_train_state(const std::string& path);

struct EpochStats {
  int epoch = 0;
  std::string phase;     // "rerank" (epoch 1) or "alternate"
  double mean_lr = 0.0;  // mean L_R over this epoch's rerank batches
  double mean_lt = 0.0;  // mean L_T over truncate batches; NaN when none ran
  double val_ndcg5 = 0.0;
  double val_tdcg = 0.0;
};

struct TrainResult {
  ModelParams params;       // final epoch
  ModelParams best;         // highest validation NDCG@5
  double best_ndcg5 = 0.0;
  std::vector<EpochStats> history;
};

/// csv: epoch,phase,mean_lr,mean_lt,val_ndcg5,val_tdcg (empty mean_lt when
/// the epoch ran no truncate batches).
std::string history_to_csv(const std::vector<EpochStats>& history);

/// Two-phase schedule: epoch 1 optimizes only L_R; later epochs alternate
/// per batch (even batches L_R with the truncation module frozen, odd
/// batches L_T with the cross-ranking FFN frozen). Deterministic for a
/// fixed seed. Throws on a non-finite batch loss, naming the batch.
/// `resume`, when given, continues from a saved epoch boundary and
/// reproduces the uninterrupted run batch for batch.
TrainResult train(const Dataset& train_data, const Dataset& valid_data,
                  const ModelConfig& model_config, const TrainConfig& train_config,
                  const TrainState* resume = nullptr);

/// Greedy full-length rollouts for a set of lists under fixed parameters;
/// gradients are not tracked. Returns one record per list plus the per-step
/// cut probabilities.
std::pair<std::vector<RolloutRecord>, std::vector<std::vector<std::pair<double, double>>>>
rollout_batch(const std::vector<QueryList>& lists, const ModelParams& params);

}  // namespace genrt
