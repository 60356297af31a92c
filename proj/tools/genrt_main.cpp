// SPDX-License-Identifier: Apache-2.0
//
// genrt: generate data, train, evaluate and run the joint
// reranking-truncation model from the command line.

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>

#include "genrt/letor_io.hpp"
#include "genrt/pipeline.hpp"
#include "genrt/trainer.hpp"

namespace fs = std::filesystem;
using namespace genrt;

namespace {

struct AppConfig {
  ModelConfig model;
  bool has_z = false;

  int epochs = 1;
  int checkpoint_every = 0;
  std::string train_path, valid_path, test_path;
  std::string checkpoint_path = "model.ckpt";
  int relevance_threshold = 1;
  bool standardize = false;
  std::string policy = "model";
  std::string mode = "full";

  int num_queries = 200;
  int docs_per_query = 10;
  int grade_max = 4;
  double noise_sigma = 1.0;
  double split_train = 0.8, split_valid = 0.1, split_test = 0.1;
};

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw std::invalid_argument("config key '" + key + "': expected true/false");
}

AppConfig load_app_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto kv = parse_kv_file(text);

  const auto& model_keys = ModelConfig::known_keys();
  std::map<std::string, std::string> model_kv;
  for (const auto& key : model_keys) {
    auto it = kv.find(key);
    if (it != kv.end()) {
      model_kv[key] = it->second;
      kv.erase(it);
    }
  }

  AppConfig app;
  app.has_z = model_kv.count("z") > 0;
  app.model = ModelConfig::from_kv(model_kv);

  auto take = [&](const char* key) -> std::optional<std::string> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  if (auto v = take("epochs")) app.epochs = std::stoi(*v);
  if (auto v = take("checkpoint_every")) app.checkpoint_every = std::stoi(*v);
  if (auto v = take("train_path")) app.train_path = *v;
  if (auto v = take("valid_path")) app.valid_path = *v;
  if (auto v = take("test_path")) app.test_path = *v;
  if (auto v = take("checkpoint_path")) app.checkpoint_path = *v;
  if (auto v = take("relevance_threshold")) app.relevance_threshold = std::stoi(*v);
  if (auto v = take("standardize")) app.standardize = parse_bool("standardize", *v);
  if (auto v = take("policy")) app.policy = *v;
  if (auto v = take("mode")) app.mode = *v;
  if (auto v = take("num_queries")) app.num_queries = std::stoi(*v);
  if (auto v = take("docs_per_query")) app.docs_per_query = std::stoi(*v);
  if (auto v = take("grade_max")) app.grade_max = std::stoi(*v);
  if (auto v = take("noise_sigma")) app.noise_sigma = std::stod(*v);
  if (auto v = take("split_train")) app.split_train = std::stod(*v);
  if (auto v = take("split_valid")) app.split_valid = std::stod(*v);
  if (auto v = take("split_test")) app.split_test = std::stod(*v);

  if (!kv.empty()) {
    throw std::invalid_argument("unknown config key '" + kv.begin()->first + "'");
  }
  return app;
}

Dataset load_letor_or_die(const std::string& what, const std::string& path) {
  if (path.empty()) throw std::invalid_argument(what + " path not set in config");
  if (!fs::exists(path)) throw std::invalid_argument(what + " path '" + path + "' does not exist");
  return parse_letor_file(path);
}

EvalOptions eval_options_for(const AppConfig& app, int grade_max) {
  EvalOptions opt;
  opt.gamma = app.model.gamma_map;
  opt.log_base = app.model.log_base;
  opt.relevance_threshold = app.relevance_threshold;
  opt.grade_max = std::max(grade_max, 1);
  return opt;
}

int cmd_gen_data(const AppConfig& app, const std::string& out_dir) {
  if (std::abs(app.split_train + app.split_valid + app.split_test - 1.0) > 1e-9) {
    throw std::invalid_argument("split fractions must sum to 1");
  }
  if (!app.has_z || app.model.Z < 1) {
    throw std::invalid_argument("gen-data needs z >= 1 in the config");
  }
  Dataset all = generate_synthetic(app.num_queries, app.docs_per_query, app.model.Z,
                                   app.grade_max, app.noise_sigma, app.model.seed);

  const int n = static_cast<int>(all.groups.size());
  const int n_train = static_cast<int>(std::llround(app.split_train * n));
  const int n_valid = static_cast<int>(std::llround(app.split_valid * n));
  auto slice = [&](int from, int count) {
    Dataset d;
    d.Z = all.Z;
    d.grade_max = all.grade_max;
    for (int i = from; i < from + count && i < n; ++i) d.groups.push_back(all.groups[i]);
    return d;
  };

  fs::create_directories(out_dir);
  write_letor_file(slice(0, n_train), out_dir + "/train.letor");
  write_letor_file(slice(n_train, n_valid), out_dir + "/valid.letor");
  write_letor_file(slice(n_train + n_valid, n - n_train - n_valid), out_dir + "/test.letor");
  std::cout << "wrote " << n_train << "/" << n_valid << "/" << (n - n_train - n_valid)
            << " query groups under " << out_dir << "\n";
  return 0;
}

int cmd_train(AppConfig app, const std::string& out_dir) {
  Dataset train_data = load_letor_or_die("train", app.train_path);
  Dataset valid_data = load_letor_or_die("valid", app.valid_path);
  const int Z = std::max(train_data.Z, valid_data.Z);
  resize_features(train_data, Z);
  resize_features(valid_data, Z);
  if (app.has_z && app.model.Z != Z) {
    throw std::invalid_argument("config z=" + std::to_string(app.model.Z) +
                                " does not match data Z=" + std::to_string(Z));
  }
  app.model.Z = Z;
  if (!app.model.gamma_map.mapping.count(train_data.grade_max)) {
    throw std::invalid_argument("gamma_map lacks an entry for grade " +
                                std::to_string(train_data.grade_max));
  }

  Vec scaler_mean, scaler_std;
  if (app.standardize) {
    std::tie(scaler_mean, scaler_std) = standardize_features(train_data);
    apply_scaler(valid_data, scaler_mean, scaler_std);
  }

  TrainConfig tc;
  tc.epochs = app.epochs;
  tc.batch_size = app.model.batch_size;
  tc.lr = app.model.lr;
  tc.seed = app.model.seed;
  tc.checkpoint_every = app.checkpoint_every;
  tc.checkpoint_dir = out_dir;

  fs::create_directories(out_dir);
  TrainResult result = train(train_data, valid_data, app.model, tc);
  if (app.standardize) {
    for (ModelParams* p : {&result.best, &result.params}) {
      p->has_scaler = true;
      p->scaler_mean = scaler_mean;
      p->scaler_std = scaler_std;
    }
  }

  save_checkpoint(result.best, out_dir + "/model.ckpt");
  std::ofstream hist(out_dir + "/history.csv");
  hist << history_to_csv(result.history);
  if (!hist) throw std::runtime_error("cannot write history file");
  std::cout << "best val ndcg@5 " << result.best_ndcg5 << " after " << result.history.size()
            << " epochs; checkpoint at " << out_dir << "/model.ckpt\n";
  return 0;
}

Dataset load_eval_data(const AppConfig& app, const ModelParams& params, const std::string& path) {
  Dataset data = load_letor_or_die("test", path);
  resize_features(data, params.config.Z);
  if (params.has_scaler) {
    apply_scaler(data, params.scaler_mean, params.scaler_std);
  }
  return data;
}

int cmd_eval(const AppConfig& app, const std::string& out_path) {
  if (!fs::exists(app.checkpoint_path)) {
    throw std::invalid_argument("checkpoint '" + app.checkpoint_path + "' does not exist");
  }
  ModelParams params = load_checkpoint(app.checkpoint_path);
  Dataset data = load_eval_data(app, params, app.test_path);

  TruncationPolicy policy = TruncationPolicy::parse(app.policy);
  DecodeMode mode = parse_decode_mode(app.mode);
  PipelineResult result =
      run_pipeline(data, params, policy, mode, eval_options_for(app, data.grade_max));

  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot write report '" + out_path + "'");
  out << result.report.to_csv();
  EvalRow mean = result.report.mean();
  std::cout << "policy=" << policy.to_string() << " mode=" << to_string(mode) << " queries="
            << result.report.rows.size() << " ndcg@5=" << mean.ndcg5 << " tdcg=" << mean.tdcg
            << " mean_len=" << mean.output_length << "\nreport written to " << out_path << "\n";
  return 0;
}

int cmd_predict(const AppConfig& app, const std::string& input_path,
                const std::string& out_path) {
  if (!fs::exists(app.checkpoint_path)) {
    throw std::invalid_argument("checkpoint '" + app.checkpoint_path + "' does not exist");
  }
  ModelParams params = load_checkpoint(app.checkpoint_path);
  const std::string input = input_path.empty() ? app.test_path : input_path;
  Dataset data = load_eval_data(app, params, input);
  DecodeMode mode = parse_decode_mode(app.mode);

  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot write traces '" + out_path + "'");
  for (const auto& group : data.groups) {
    QueryList validated = validate_query_list(group, params.config);
    DecodeTrace trace = decode(validated, params, mode);
    out << trace.to_line(validated) << '\n';
  }
  std::cout << "traces for " << data.groups.size() << " queries written to " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli("joint reranking-truncation for ranked lists");
  cli.require_subcommand(1);

  std::string config_path;
  std::string out_path;
  std::string policy_flag, mode_flag, input_path;
  std::optional<std::uint64_t> seed_flag;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "configuration file")->required();
    cmd->add_option("--seed", seed_flag, "override the config seed");
    cmd->add_option("--out", out_path, "output path");
  };

  auto* gen = cli.add_subcommand("gen-data", "write synthetic LETOR train/valid/test splits");
  add_common(gen);
  auto* train_cmd = cli.add_subcommand("train", "train and save the best checkpoint");
  add_common(train_cmd);
  auto* eval_cmd = cli.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval_cmd);
  eval_cmd->add_option("--policy", policy_flag, "model | fixed:<x> | oracle");
  eval_cmd->add_option("--mode", mode_flag, "full | rerank_only | fast | truncate_only");
  auto* predict_cmd = cli.add_subcommand("predict", "decode a LETOR file into trace lines");
  add_common(predict_cmd);
  predict_cmd->add_option("--mode", mode_flag, "full | rerank_only | fast | truncate_only");
  predict_cmd->add_option("input", input_path, "input LETOR file (defaults to test_path)");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = cli.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (out_path.empty()) {
    if (gen->parsed()) out_path = "data";
    else if (train_cmd->parsed()) out_path = "run";
    else if (eval_cmd->parsed()) out_path = "report.csv";
    else out_path = "traces.txt";
  }

  try {
    AppConfig app = load_app_config(config_path);
    if (seed_flag) app.model.seed = *seed_flag;
    if (!policy_flag.empty()) app.policy = policy_flag;
    if (!mode_flag.empty()) app.mode = mode_flag;

    if (gen->parsed()) return cmd_gen_data(app, out_path);
    if (train_cmd->parsed()) return cmd_train(app, out_path);
    if (eval_cmd->parsed()) return cmd_eval(app, out_path);
    if (predict_cmd->parsed()) return cmd_predict(app, input_path, out_path);
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
