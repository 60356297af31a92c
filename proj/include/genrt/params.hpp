// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "genrt/autodiff.hpp"
#include "genrt/types.hpp"

namespace genrt {

/// Weights of one multi-head self-attention block.
struct AttnWeights {
  Mat Wq, bq, Wk, bk, Wv, bv, Wo, bo;
};

/// All learnable weights plus the config they were built for. The optional
/// feature scaler rides along as non-trainable state.
struct ModelParams {
  ModelConfig config;

  Mat transfer_W, transfer_b;  // shared by encoder and decoder prefix
  struct EncBlock {
    Mat ln_gamma, ln_beta;
    AttnWeights attn;
  };
  std::vector<EncBlock> enc_blocks;

  Mat start;  // 1 x (Z+1), projected through the transfer map at step 1
  AttnWeights prefix_attn;
  Mat latent_W, latent_b;  // gate MLP on O
  Mat ffn_W, ffn_b;        // FFN-Swish on U
  Mat rffn_W1, rffn_b1, rffn_W2, rffn_b2;
  AttnWeights trunc_attn;
  Mat relpos_table;  // 1 x rel_pos_buckets
  Mat head_W, head_b;

  bool has_scaler = false;
  Vec scaler_mean, scaler_std;

  /// Deterministic initialization from config.seed. Affine maps use scaled
  /// uniform fan-in; attention output projections start near zero so the
  /// encoder residual dominates at init.
  static ModelParams init(const ModelConfig& config);

  /// Visits every trainable tensor in a fixed order.
  void for_each(const std::function<void(const std::string&, Mat&)>& fn);
  void for_each(const std::function<void(const std::string&, const Mat&)>& fn) const;

  int num_scalars() const;

  /// Flattened copy of all trainable tensors, manifest order.
  Vec flatten() const;
  void unflatten(const Vec& theta);
};

/// Parameter freeze groups of the alternating training schedule.
bool is_truncation_param(const std::string& name);   // trunc attention, head, relpos
bool is_cross_rank_ffn_param(const std::string& name);  // the rFFN

/// Binary checkpoint, version tag "genrt-ckpt-1". Shape manifest is
/// validated on load; a mismatch names the offending tensor.
void save_checkpoint(const ModelParams& params, const std::string& path);
void save_checkpoint(const ModelParams& params, std::ostream& out);
ModelParams load_checkpoint(const std::string& path);
ModelParams load_checkpoint(std::istream& in, const std::string& what);

/// Tape handles for every tensor, bound once per rollout.
struct BoundAttn {
  Var Wq, bq, Wk, bk, Wv, bv, Wo, bo;
};

struct BoundParams {
  const ModelConfig* config = nullptr;
  Var transfer_W, transfer_b;
  struct EncBlock {
    Var ln_gamma, ln_beta;
    BoundAttn attn;
  };
  std::vector<EncBlock> enc_blocks;
  Var start;
  BoundAttn prefix_attn;
  Var latent_W, latent_b;
  Var ffn_W, ffn_b;
  Var rffn_W1, rffn_b1, rffn_W2, rffn_b2;
  BoundAttn trunc_attn;
  Var relpos_table;
  Var head_W, head_b;
};

BoundParams bind_params(Tape& tape, const ModelParams& params);

/// Gradients of every trainable tensor after backward, flattened in
/// manifest order.
Vec collect_gradients(const Tape& tape, const BoundParams& bound, const ModelParams& params);

}  // namespace genrt
