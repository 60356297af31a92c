// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "genrt/types.hpp"

namespace genrt {

/// Handle to a node on a Tape.
struct Var {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

/// Reverse-mode autodiff over dense double matrices. Values are computed
/// eagerly; backward closures are only recorded for nodes that depend on a
/// leaf (and only while grad is enabled), so inference pays for values only.
///
/// Row/column conventions used by the model code: a sequence of N documents
/// is an N x E matrix, a single embedding is 1 x E, a score row is 1 x N and
/// scalars are 1 x 1.
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  bool grad_enabled() const { return grad_enabled_; }
  int size() const { return static_cast<int>(nodes_.size()); }

  Var constant(Mat value);
  /// A differentiable leaf (a model parameter).
  Var leaf(Mat value);

  const Mat& val(Var v) const { return node(v).value; }
  /// Gradient accumulated by backward(); zero matrix if the node was never
  /// reached.
  Mat grad_of(Var v) const;

  // -- arithmetic ---------------------------------------------------------
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);  // elementwise
  Var matmul(Var a, Var b);
  Var transpose(Var a);
  Var scale(Var a, double s);
  Var add_scalar(Var a, double s);
  /// NxE + 1xE, row broadcast.
  Var add_row_broadcast(Var a, Var row);
  /// NxM - Nx1, column broadcast.
  Var sub_col_broadcast(Var a, Var col);
  /// Tiles a 1xE row into n identical rows.
  Var repeat_rows(Var row, int n);

  // -- nonlinearities ------------------------------------------------------
  Var swish(Var a);
  Var softplus(Var a);
  Var softmax_rows(Var a);
  /// NxM -> Nx1 of log(sum(exp(row))), max-shifted.
  Var logsumexp_rows(Var a);
  Var layer_norm_rows(Var a, Var gamma, Var beta, double eps = 1e-5);

  // -- structure -----------------------------------------------------------
  Var concat_rows(std::span<const Var> parts);
  Var concat_cols(std::span<const Var> parts);
  Var slice_rows(Var a, int r0, int n);
  Var slice_cols(Var a, int c0, int n);
  /// Picks rows by index (duplicates allowed); backward scatter-adds.
  Var select_rows(Var a, std::vector<int> rows);
  Var pick(Var a, int r, int c);  // 1x1
  Var sum(Var a);                 // 1x1
  /// sum(a .* weights) as a 1x1 node; weights are plain constants.
  Var dot_const(Var a, const Mat& weights);
  /// Entries where mask != 0 are replaced by `value` (no gradient there).
  Var mask_fill(Var a, const Mat& mask, double value);
  /// out(i,j) = table(0, idx(i,j)); backward scatter-adds into the table.
  Var gather(Var table, const Eigen::MatrixXi& idx);

  /// Backpropagates from a 1x1 loss node.
  void backward(Var loss);

 private:
  struct Node {
    Mat value;
    Mat grad;  // empty until touched
    bool requires_grad = false;
    std::function<void()> back;
  };

  const Node& node(Var v) const;
  Node& node(Var v);
  Var push(Mat value, bool requires_grad, std::function<void()> back);
  void accumulate(int idx, const Mat& g);
  bool track(std::initializer_list<Var> parents) const;

  std::deque<Node> nodes_;
  bool grad_enabled_;
};

}  // namespace genrt
