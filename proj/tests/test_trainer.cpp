// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <unistd.h>

#include "genrt/metrics.hpp"
#include "genrt/trainer.hpp"

using namespace genrt;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_model(int z, std::uint64_t seed = 3) {
  ModelConfig c;
  c.Z = z;
  c.E = 16;
  c.heads = 2;
  c.beta = 2;
  c.seed = seed;
  c.lr = 1e-3;
  c.batch_size = 8;
  return c;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("genrt_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string str(const std::string& name) const { return (path / name).string(); }
};

bool same_tensor(const Mat& a, const Mat& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a - b).cwiseAbs().maxCoeff() == 0.0;
}

}  // namespace

TEST_CASE("one epoch of training never touches the truncation module") {
  Dataset data = generate_synthetic(16, 5, 4, 4, 0.5, 1);
  ModelConfig mc = tiny_model(4);
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = mc.batch_size;
  tc.lr = mc.lr;
  tc.seed = mc.seed;

  TrainResult result = train(data, Dataset{}, mc, tc);
  ModelParams fresh = ModelParams::init(mc);

  std::map<std::string, Mat> before, after;
  fresh.for_each([&](const std::string& n, const Mat& m) { before[n] = m; });
  result.params.for_each([&](const std::string& n, const Mat& m) { after[n] = m; });
  bool rffn_changed = false;
  for (const auto& [name, m] : before) {
    if (is_truncation_param(name)) {
      CHECK(same_tensor(m, after[name]));
    } else if (is_cross_rank_ffn_param(name)) {
      rffn_changed = rffn_changed || !same_tensor(m, after[name]);
    }
  }
  CHECK(rffn_changed);
}

TEST_CASE("per-batch freeze contract") {
  Dataset data = generate_synthetic(16, 5, 4, 4, 0.5, 2);
  ModelConfig mc = tiny_model(4);
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 4;  // several batches per epoch
  tc.lr = mc.lr;
  tc.seed = mc.seed;

  ModelParams previous = ModelParams::init(mc);
  bool trunc_moved_somewhere = false;
  tc.on_batch_end = [&](int, int, const std::string& phase, const ModelParams& now) {
    std::map<std::string, Mat> prev_map;
    previous.for_each([&](const std::string& n, const Mat& m) { prev_map[n] = m; });
    now.for_each([&](const std::string& n, const Mat& m) {
      if (phase == "rerank" && is_truncation_param(n)) {
        CHECK(same_tensor(prev_map[n], m));
      }
      if (phase == "truncate" && is_cross_rank_ffn_param(n)) {
        CHECK(same_tensor(prev_map[n], m));
      }
      if (phase == "truncate" && is_truncation_param(n) && !same_tensor(prev_map[n], m)) {
        trunc_moved_somewhere = true;
      }
    });
    previous = now;
  };
  train(data, Dataset{}, mc, tc);
  CHECK(trunc_moved_somewhere);
}

TEST_CASE("training is deterministic and the loss goes down") {
  Dataset data = generate_synthetic(24, 6, 4, 4, 0.5, 5);
  Dataset valid = generate_synthetic(6, 6, 4, 4, 0.5, 6);
  ModelConfig mc = tiny_model(4);
  TrainConfig tc;
  tc.epochs = 5;
  tc.batch_size = 8;
  tc.lr = 1e-3;
  tc.seed = 7;

  TrainResult a = train(data, valid, mc, tc);
  TrainResult b = train(data, valid, mc, tc);
  CHECK(history_to_csv(a.history) == history_to_csv(b.history));
  REQUIRE(a.history.size() == 5);
  CHECK(a.history[4].mean_lr < a.history[0].mean_lr);
  CHECK(std::isnan(a.history[0].mean_lt));
  CHECK_FALSE(std::isnan(a.history[1].mean_lt));
}

TEST_CASE("rollout_batch matches rerank-only decode") {
  Dataset data = generate_synthetic(6, 7, 4, 4, 0.5, 9);
  ModelConfig mc = tiny_model(4);
  ModelParams params = ModelParams::init(mc);

  auto [records, probs] = rollout_batch(data.groups, params);
  REQUIRE(records.size() == 6);
  REQUIRE(probs.size() == 6);
  for (size_t q = 0; q < records.size(); ++q) {
    const auto& record = records[q];
    std::set<int> unique(record.chosen.begin(), record.chosen.end());
    CHECK(unique.size() == record.chosen.size());
    CHECK(record.chosen.size() == 7);
    CHECK(probs[q].size() == 7);

    DecodeTrace trace = decode(data.groups[q], params, DecodeMode::RerankOnly);
    CHECK(trace.chosen == record.chosen);
  }
}

TEST_CASE("checkpoint round trip reproduces forward outputs bit for bit") {
  TempDir dir;
  ModelConfig mc = tiny_model(4, 11);
  ModelParams params = ModelParams::init(mc);
  // push the weights off their init values
  Dataset data = generate_synthetic(8, 5, 4, 4, 0.5, 12);
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 8;
  tc.lr = 1e-3;
  tc.seed = 11;
  params = train(data, Dataset{}, mc, tc).params;

  save_checkpoint(params, dir.str("model.ckpt"));
  ModelParams loaded = load_checkpoint(dir.str("model.ckpt"));

  Dataset probe = generate_synthetic(10, 6, 4, 4, 0.5, 13);
  for (const auto& list : probe.groups) {
    DecodeTrace a = decode(list, params, DecodeMode::RerankOnly);
    DecodeTrace b = decode(list, loaded, DecodeMode::RerankOnly);
    CHECK(a.chosen == b.chosen);
    REQUIRE(a.score_matrices.size() == b.score_matrices.size());
    for (size_t t = 0; t < a.score_matrices.size(); ++t) {
      CHECK((a.score_matrices[t] - b.score_matrices[t]).cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("checkpoint shape mismatches are rejected by tensor name") {
  TempDir dir;
  ModelConfig mc = tiny_model(4, 15);
  ModelParams params = ModelParams::init(mc);
  save_checkpoint(params, dir.str("model.ckpt"));

  // A checkpoint whose config says Z=7 but whose tensors were written for
  // Z=4: the transfer weights no longer match the manifest.
  ModelParams wrong = params;
  wrong.config.Z = 7;
  std::ofstream out(dir.str("bad.ckpt"), std::ios::binary);
  // reuse the writer via the public API, then splice: simplest is to write
  // a fresh file with the doctored config but old tensor shapes
  out.close();
  {
    ModelParams doctored = params;
    doctored.config.Z = 7;  // manifest now expects (7+1) x E transfer weights
    // keep the old 5 x E tensor
    CHECK_THROWS_WITH_AS(
        [&] {
          save_checkpoint(doctored, dir.str("bad.ckpt"));
          load_checkpoint(dir.str("bad.ckpt"));
        }(),
        doctest::Contains("enc.transfer.W"), std::runtime_error);
  }

  CHECK_THROWS_AS(load_checkpoint(dir.str("missing.ckpt")), std::runtime_error);
}

TEST_CASE("resumed training reproduces the uninterrupted run") {
  TempDir dir;
  Dataset data = generate_synthetic(20, 5, 4, 4, 0.5, 21);
  Dataset valid = generate_synthetic(5, 5, 4, 4, 0.5, 22);
  ModelConfig mc = tiny_model(4, 23);
  TrainConfig tc;
  tc.epochs = 4;
  tc.batch_size = 8;
  tc.lr = 1e-3;
  tc.seed = 23;

  TrainResult uninterrupted = train(data, valid, mc, tc);

  TrainConfig tc_first = tc;
  tc_first.epochs = 2;
  tc_first.checkpoint_every = 2;
  tc_first.checkpoint_dir = dir.path.string();
  train(data, valid, mc, tc_first);

  TrainState state = load_train_state(dir.str("epoch2.state"));
  CHECK(state.next_epoch == 3);
  TrainResult resumed = train(data, valid, mc, tc, &state);

  REQUIRE(resumed.history.size() == 2);
  for (size_t i = 0; i < 2; ++i) {
    const EpochStats& r = resumed.history[i];
    const EpochStats& u = uninterrupted.history[i + 2];
    CHECK(r.epoch == u.epoch);
    CHECK(r.mean_lr == u.mean_lr);
    CHECK(r.mean_lt == u.mean_lt);
    CHECK(r.val_ndcg5 == u.val_ndcg5);
    CHECK(r.val_tdcg == u.val_tdcg);
  }
}

TEST_CASE("history csv formats nan as an empty field") {
  EpochStats e1;
  e1.epoch = 1;
  e1.phase = "rerank";
  e1.mean_lr = 1.5;
  e1.mean_lt = std::numeric_limits<double>::quiet_NaN();
  e1.val_ndcg5 = 0.5;
  e1.val_tdcg = 2.0;
  std::string csv = history_to_csv({e1});
  CHECK(csv.find("1,rerank,1.5,,0.5,2\n") != std::string::npos);
}
