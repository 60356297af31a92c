// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "genrt/autodiff.hpp"
#include "genrt/params.hpp"
#include "genrt/types.hpp"

namespace genrt {

/// Input embedding matrix: row i is doc i's features with the initial score
/// appended, so U is N x (Z+1). Throws when a feature or score is not
/// finite.
Mat embed_inputs(const QueryList& list);

/// Multi-head self-attention. Keys and values range over all rows of X;
/// queries are restricted to rows [q0, q0+qn) so decoder steps that only
/// need one output row skip the rest. `bias`, when valid, is a qn x N
/// matrix added to every head's attention logits.
Var mhsa(Tape& tape, const BoundAttn& w, Var X, int heads, Var bias = {}, int q0 = 0,
         int qn = -1);

/// Transfer layer, Swish(affine(U)): maps input rows into the attention
/// space. Shared between the encoder and the decoder's prefix path.
Var transfer(Tape& tape, const BoundParams& p, Var U);

/// Global dependency encoder: pre-norm residual blocks
/// X <- X + MHSA(LN(X)), stacked config.encoder_blocks times.
Var encode(Tape& tape, const BoundParams& p, Var X);

/// Convenience: U (constant), X, O for a validated list on one tape.
struct EncoderOutput {
  Var U, X, O;
};
EncoderOutput run_encoder(Tape& tape, const BoundParams& p, const QueryList& list);

}  // namespace genrt
