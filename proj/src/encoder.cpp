// SPDX-License-Identifier: Apache-2.0
#include "genrt/encoder.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace genrt {

Mat embed_inputs(const QueryList& list) {
  const int n = list.size();
  if (n == 0) throw std::runtime_error("empty query group (qid '" + list.qid + "')");
  const int z = static_cast<int>(list.docs[0].features.size());
  Mat u(n, z + 1);
  for (int i = 0; i < n; ++i) {
    const FeatureDoc& d = list.docs[i];
    if (d.features.size() != z) {
      throw std::runtime_error("feature length mismatch in qid '" + list.qid + "' row " +
                               std::to_string(i));
    }
    for (int j = 0; j < z; ++j) {
      if (!std::isfinite(d.features[j])) {
        throw std::runtime_error("non-finite feature in qid '" + list.qid + "' row " +
                                 std::to_string(i));
      }
      u(i, j) = d.features[j];
    }
    if (!std::isfinite(d.initial_score)) {
      throw std::runtime_error("non-finite initial score in qid '" + list.qid + "' row " +
                               std::to_string(i));
    }
    u(i, z) = d.initial_score;
  }
  return u;
}

Var mhsa(Tape& t, const BoundAttn& w, Var X, int heads, Var bias, int q0, int qn) {
  const int n = static_cast<int>(t.val(X).rows());
  const int e = static_cast<int>(t.val(X).cols());
  if (qn < 0) qn = n - q0;
  const int dk = e / heads;
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));

  Var Xq = (q0 == 0 && qn == n) ? X : t.slice_rows(X, q0, qn);
  Var Q = t.add_row_broadcast(t.matmul(Xq, w.Wq), w.bq);
  Var K = t.add_row_broadcast(t.matmul(X, w.Wk), w.bk);
  Var V = t.add_row_broadcast(t.matmul(X, w.Wv), w.bv);

  std::vector<Var> head_outs;
  head_outs.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    Var Qh = t.slice_cols(Q, h * dk, dk);
    Var Kh = t.slice_cols(K, h * dk, dk);
    Var Vh = t.slice_cols(V, h * dk, dk);
    Var logits = t.scale(t.matmul(Qh, t.transpose(Kh)), inv_sqrt_dk);
    if (bias.valid()) logits = t.add(logits, bias);
    Var attn = t.softmax_rows(logits);
    head_outs.push_back(t.matmul(attn, Vh));
  }
  Var H = t.concat_cols(head_outs);
  return t.add_row_broadcast(t.matmul(H, w.Wo), w.bo);
}

Var transfer(Tape& t, const BoundParams& p, Var U) {
  return t.swish(t.add_row_broadcast(t.matmul(U, p.transfer_W), p.transfer_b));
}

Var encode(Tape& t, const BoundParams& p, Var X) {
  Var out = X;
  for (const auto& blk : p.enc_blocks) {
    Var normed = t.layer_norm_rows(out, blk.ln_gamma, blk.ln_beta);
    out = t.add(out, mhsa(t, blk.attn, normed, p.config->heads));
  }
  return out;
}

EncoderOutput run_encoder(Tape& t, const BoundParams& p, const QueryList& list) {
  EncoderOutput eo;
  eo.U = t.constant(embed_inputs(list));
  eo.X = transfer(t, p, eo.U);
  eo.O = encode(t, p, eo.X);
  return eo;
}

}  // namespace genrt
