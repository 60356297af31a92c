// SPDX-License-Identifier: Apache-2.0
#include "genrt/params.hpp"

#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace genrt {

namespace {

constexpr const char* kMagic = "genrt-ckpt-1";

// Single schema definition: every structure that mirrors the parameter tree
// (ModelParams with Mat fields, BoundParams with Var fields) is walked in
// the same fixed order.
template <typename Attn, typename Fn>
void walk_attn(const std::string& base, Attn& a, Fn&& fn) {
  fn(base + "Wq", a.Wq);
  fn(base + "bq", a.bq);
  fn(base + "Wk", a.Wk);
  fn(base + "bk", a.bk);
  fn(base + "Wv", a.Wv);
  fn(base + "bv", a.bv);
  fn(base + "Wo", a.Wo);
  fn(base + "bo", a.bo);
}

template <typename PS, typename Fn>
void walk_params(PS& p, Fn&& fn) {
  fn("enc.transfer.W", p.transfer_W);
  fn("enc.transfer.b", p.transfer_b);
  for (size_t i = 0; i < p.enc_blocks.size(); ++i) {
    auto& blk = p.enc_blocks[i];
    const std::string base = "enc.block" + std::to_string(i) + ".";
    fn(base + "ln_gamma", blk.ln_gamma);
    fn(base + "ln_beta", blk.ln_beta);
    walk_attn(base + "attn.", blk.attn, fn);
  }
  fn("dec.start", p.start);
  walk_attn("dec.prefix.", p.prefix_attn, fn);
  fn("dec.latent.W", p.latent_W);
  fn("dec.latent.b", p.latent_b);
  fn("dec.ffn.W", p.ffn_W);
  fn("dec.ffn.b", p.ffn_b);
  fn("dec.rffn.W1", p.rffn_W1);
  fn("dec.rffn.b1", p.rffn_b1);
  fn("dec.rffn.W2", p.rffn_W2);
  fn("dec.rffn.b2", p.rffn_b2);
  walk_attn("trunc.attn.", p.trunc_attn, fn);
  fn("trunc.relpos", p.relpos_table);
  fn("trunc.head.W", p.head_W);
  fn("trunc.head.b", p.head_b);
}

struct InitRng {
  std::mt19937_64 rng;
  explicit InitRng(std::uint64_t seed) : rng(seed) {}

  Mat uniform_fan_in(int rows, int cols, double gain = 1.0) {
    double a = gain * std::sqrt(1.0 / std::max(1, rows));
    std::uniform_real_distribution<double> dist(-a, a);
    Mat m(rows, cols);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) m(r, c) = dist(rng);
    }
    return m;
  }
};

}  // namespace

ModelParams ModelParams::init(const ModelConfig& config) {
  config.validate();
  ModelParams p;
  p.config = config;
  const int Zin = config.input_dim();
  const int E = config.E;

  InitRng r(config.seed);
  auto attn = [&](bool near_zero_out) {
    AttnWeights a;
    a.Wq = r.uniform_fan_in(E, E);
    a.bq = Mat::Zero(1, E);
    a.Wk = r.uniform_fan_in(E, E);
    a.bk = Mat::Zero(1, E);
    a.Wv = r.uniform_fan_in(E, E);
    a.bv = Mat::Zero(1, E);
    a.Wo = r.uniform_fan_in(E, E, near_zero_out ? 0.05 : 1.0);
    a.bo = Mat::Zero(1, E);
    return a;
  };

  p.transfer_W = r.uniform_fan_in(Zin, E);
  p.transfer_b = Mat::Zero(1, E);
  p.enc_blocks.resize(config.encoder_blocks);
  for (auto& blk : p.enc_blocks) {
    blk.ln_gamma = Mat::Ones(1, E);
    blk.ln_beta = Mat::Zero(1, E);
    // near-zero output projection keeps the residual dominant at init
    blk.attn = attn(true);
  }
  p.start = r.uniform_fan_in(1, Zin, 0.5);
  // the prefix and truncation blocks have no residual, so their output
  // projections start at full scale
  p.prefix_attn = attn(false);
  p.latent_W = r.uniform_fan_in(E, E);
  p.latent_b = Mat::Zero(1, E);
  p.ffn_W = r.uniform_fan_in(Zin, E);
  p.ffn_b = Mat::Zero(1, E);
  p.rffn_W1 = r.uniform_fan_in(2 * E, 32);
  p.rffn_b1 = Mat::Zero(1, 32);
  p.rffn_W2 = r.uniform_fan_in(32, 1);
  p.rffn_b2 = Mat::Zero(1, 1);
  p.trunc_attn = attn(false);
  p.relpos_table = Mat::Zero(1, config.rel_pos_buckets);
  p.head_W = r.uniform_fan_in(E, 2);
  p.head_b = Mat::Zero(1, 2);
  return p;
}

void ModelParams::for_each(const std::function<void(const std::string&, Mat&)>& fn) {
  walk_params(*this, [&](const std::string& name, Mat& m) { fn(name, m); });
}

void ModelParams::for_each(const std::function<void(const std::string&, const Mat&)>& fn) const {
  walk_params(*this, [&](const std::string& name, const Mat& m) { fn(name, m); });
}

int ModelParams::num_scalars() const {
  int n = 0;
  for_each([&](const std::string&, const Mat& m) { n += static_cast<int>(m.size()); });
  return n;
}

Vec ModelParams::flatten() const {
  Vec theta(num_scalars());
  int at = 0;
  for_each([&](const std::string&, const Mat& m) {
    for (int r = 0; r < m.rows(); ++r) {
      for (int c = 0; c < m.cols(); ++c) theta[at++] = m(r, c);
    }
  });
  return theta;
}

void ModelParams::unflatten(const Vec& theta) {
  if (theta.size() != num_scalars()) {
    throw std::invalid_argument("unflatten: wrong parameter count");
  }
  int at = 0;
  for_each([&](const std::string&, Mat& m) {
    for (int r = 0; r < m.rows(); ++r) {
      for (int c = 0; c < m.cols(); ++c) m(r, c) = theta[at++];
    }
  });
}

bool is_truncation_param(const std::string& name) { return name.rfind("trunc.", 0) == 0; }

bool is_cross_rank_ffn_param(const std::string& name) { return name.rfind("dec.rffn.", 0) == 0; }

namespace {

void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

void write_string(std::ostream& out, const std::string& s) {
  write_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  std::uint64_t n = read_u64(in);
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  return s;
}

void write_mat(std::ostream& out, const std::string& name, const Mat& m) {
  write_string(out, name);
  write_u64(out, static_cast<std::uint64_t>(m.rows()));
  write_u64(out, static_cast<std::uint64_t>(m.cols()));
  for (int r = 0; r < m.rows(); ++r) {
    for (int c = 0; c < m.cols(); ++c) {
      double v = m(r, c);
      out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
  }
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint '" + path + "' for writing");
  save_checkpoint(params, out);
  out.flush();
  if (!out) throw std::runtime_error("checkpoint write failed for '" + path + "'");
}

void save_checkpoint(const ModelParams& params, std::ostream& out) {
  write_string(out, kMagic);
  write_string(out, serialize_kv(params.config.to_kv()));
  write_u64(out, static_cast<std::uint64_t>(params.has_scaler ? 1 : 0));
  if (params.has_scaler) {
    write_mat(out, "scaler.mean", params.scaler_mean.transpose());
    write_mat(out, "scaler.std", params.scaler_std.transpose());
  }
  std::uint64_t count = 0;
  params.for_each([&](const std::string&, const Mat&) { ++count; });
  write_u64(out, count);
  params.for_each([&](const std::string& name, const Mat& m) { write_mat(out, name, m); });
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  return load_checkpoint(in, path);
}

ModelParams load_checkpoint(std::istream& in, const std::string& path) {
  if (read_string(in) != kMagic) {
    throw std::runtime_error("'" + path + "' is not a " + std::string(kMagic) + " checkpoint");
  }
  ModelConfig config = ModelConfig::from_kv(parse_kv_file(read_string(in)));

  // Expected shapes come from a fresh build for this config.
  ModelParams params = ModelParams::init(config);

  auto read_into = [&](const std::string& want_name, Mat& m) {
    std::string name = read_string(in);
    std::uint64_t rows = read_u64(in);
    std::uint64_t cols = read_u64(in);
    if (!in) throw std::runtime_error("checkpoint '" + path + "' truncated");
    if (name != want_name || rows != static_cast<std::uint64_t>(m.rows()) ||
        cols != static_cast<std::uint64_t>(m.cols())) {
      throw std::runtime_error("checkpoint tensor '" + name + "': expected '" + want_name +
                               "' of shape " + std::to_string(m.rows()) + "x" +
                               std::to_string(m.cols()) + ", got " + std::to_string(rows) + "x" +
                               std::to_string(cols));
    }
    for (std::uint64_t r = 0; r < rows; ++r) {
      for (std::uint64_t c = 0; c < cols; ++c) {
        double v = 0.0;
        in.read(reinterpret_cast<char*>(&v), sizeof(v));
        m(static_cast<int>(r), static_cast<int>(c)) = v;
      }
    }
  };

  params.has_scaler = read_u64(in) != 0;
  if (params.has_scaler) {
    Mat mean(1, config.Z), std(1, config.Z);
    read_into("scaler.mean", mean);
    read_into("scaler.std", std);
    params.scaler_mean = mean.transpose();
    params.scaler_std = std.transpose();
  }

  std::uint64_t count = read_u64(in);
  std::uint64_t expected = 0;
  params.for_each([&](const std::string&, const Mat&) { ++expected; });
  if (count != expected) {
    throw std::runtime_error("checkpoint '" + path + "' has " + std::to_string(count) +
                             " tensors, expected " + std::to_string(expected));
  }
  params.for_each([&](const std::string& name, Mat& m) { read_into(name, m); });
  if (!in) throw std::runtime_error("checkpoint '" + path + "' truncated");
  return params;
}

BoundParams bind_params(Tape& tape, const ModelParams& params) {
  BoundParams bound;
  bound.config = &params.config;
  bound.enc_blocks.resize(params.enc_blocks.size());

  std::vector<const Mat*> mats;
  walk_params(params, [&](const std::string&, const Mat& m) { mats.push_back(&m); });
  std::vector<Var*> vars;
  walk_params(bound, [&](const std::string&, Var& v) { vars.push_back(&v); });
  if (mats.size() != vars.size()) throw std::logic_error("parameter schema mismatch");
  for (size_t i = 0; i < mats.size(); ++i) {
    *vars[i] = tape.leaf(*mats[i]);
  }
  return bound;
}

Vec collect_gradients(const Tape& tape, const BoundParams& bound, const ModelParams& params) {
  Vec grad(params.num_scalars());
  int at = 0;
  walk_params(bound, [&](const std::string&, const Var& v) {
    Mat g = tape.grad_of(v);
    for (int r = 0; r < g.rows(); ++r) {
      for (int c = 0; c < g.cols(); ++c) grad[at++] = g(r, c);
    }
  });
  return grad;
}

}  // namespace genrt
