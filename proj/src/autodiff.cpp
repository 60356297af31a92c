// SPDX-License-Identifier: Apache-2.0
#include "genrt/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace genrt {

namespace {

void check(bool ok, const char* what) {
  if (!ok) throw std::logic_error(std::string("tape: ") + what);
}

Mat sigmoid_of(const Mat& x) {
  return x.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

}  // namespace

const Tape::Node& Tape::node(Var v) const {
  check(v.idx >= 0 && v.idx < size(), "invalid var");
  return nodes_[v.idx];
}

Tape::Node& Tape::node(Var v) {
  check(v.idx >= 0 && v.idx < size(), "invalid var");
  return nodes_[v.idx];
}

Var Tape::push(Mat value, bool requires_grad, std::function<void()> back) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad && grad_enabled_;
  if (n.requires_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{size() - 1};
}

void Tape::accumulate(int idx, const Mat& g) {
  Node& n = nodes_[idx];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

bool Tape::track(std::initializer_list<Var> parents) const {
  if (!grad_enabled_) return false;
  for (Var p : parents) {
    if (node(p).requires_grad) return true;
  }
  return false;
}

Mat Tape::grad_of(Var v) const {
  const Node& n = node(v);
  if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Var Tape::constant(Mat value) { return push(std::move(value), false, nullptr); }

Var Tape::leaf(Mat value) { return push(std::move(value), true, nullptr); }

Var Tape::add(Var a, Var b) {
  check(val(a).rows() == val(b).rows() && val(a).cols() == val(b).cols(), "add shape");
  Var out{size()};
  return push(val(a) + val(b), track({a, b}), [this, a, b, out] {
    const Mat& g = nodes_[out.idx].grad;
    accumulate(a.idx, g);
    accumulate(b.idx, g);
  });
}

Var Tape::sub(Var a, Var b) {
  check(val(a).rows() == val(b).rows() && val(a).cols() == val(b).cols(), "sub shape");
  Var out{size()};
  return push(val(a) - val(b), track({a, b}), [this, a, b, out] {
    const Mat& g = nodes_[out.idx].grad;
    accumulate(a.idx, g);
    accumulate(b.idx, Mat(-g));
  });
}

Var Tape::mul(Var a, Var b) {
  check(val(a).rows() == val(b).rows() && val(a).cols() == val(b).cols(), "mul shape");
  Var out{size()};
  return push(val(a).cwiseProduct(val(b)), track({a, b}), [this, a, b, out] {
    const Mat& g = nodes_[out.idx].grad;
    accumulate(a.idx, g.cwiseProduct(nodes_[b.idx].value));
    accumulate(b.idx, g.cwiseProduct(nodes_[a.idx].value));
  });
}

Var Tape::matmul(Var a, Var b) {
  check(val(a).cols() == val(b).rows(), "matmul shape");
  Var out{size()};
  return push(val(a) * val(b), track({a, b}), [this, a, b, out] {
    const Mat& g = nodes_[out.idx].grad;
    accumulate(a.idx, g * nodes_[b.idx].value.transpose());
    accumulate(b.idx, nodes_[a.idx].value.transpose() * g);
  });
}

Var Tape::transpose(Var a) {
  Var out{size()};
  return push(val(a).transpose(), track({a}), [this, a, out] {
    accumulate(a.idx, nodes_[out.idx].grad.transpose());
  });
}

Var Tape::scale(Var a, double s) {
  Var out{size()};
  return push(val(a) * s, track({a}), [this, a, s, out] {
    accumulate(a.idx, Mat(nodes_[out.idx].grad * s));
  });
}

Var Tape::add_scalar(Var a, double s) {
  Var out{size()};
  return push(Mat((val(a).array() + s).matrix()), track({a}), [this, a, out] {
    accumulate(a.idx, nodes_[out.idx].grad);
  });
}

Var Tape::add_row_broadcast(Var a, Var row) {
  check(val(row).rows() == 1 && val(row).cols() == val(a).cols(), "row broadcast shape");
  Var out{size()};
  Mat v = val(a);
  v.rowwise() += val(row).row(0);
  return push(std::move(v), track({a, row}), [this, a, row, out] {
    const Mat& g = nodes_[out.idx].grad;
    accumulate(a.idx, g);
    accumulate(row.idx, Mat(g.colwise().sum()));
  });
}

Var Tape::sub_col_broadcast(Var a, Var col) {
  check(val(col).cols() == 1 && val(col).rows() == val(a).rows(), "col broadcast shape");
  Var out{size()};
  Mat v = val(a);
  v.colwise() -= val(col).col(0);
  return push(std::move(v), track({a, col}), [this, a, col, out] {
    const Mat& g = nodes_[out.idx].grad;
    accumulate(a.idx, g);
    accumulate(col.idx, Mat(-g.rowwise().sum()));
  });
}

Var Tape::repeat_rows(Var row, int n) {
  check(val(row).rows() == 1 && n >= 1, "repeat_rows shape");
  Var out{size()};
  return push(val(row).replicate(n, 1), track({row}), [this, row, out] {
    accumulate(row.idx, Mat(nodes_[out.idx].grad.colwise().sum()));
  });
}

Var Tape::swish(Var a) {
  Mat sig = sigmoid_of(val(a));
  Var out{size()};
  return push(val(a).cwiseProduct(sig), track({a}), [this, a, sig, out] {
    const Mat& x = nodes_[a.idx].value;
    // d/dx x*sig(x) = sig(x) * (1 + x*(1 - sig(x)))
    Mat d = (sig.array() * (1.0 + x.array() * (1.0 - sig.array()))).matrix();
    accumulate(a.idx, nodes_[out.idx].grad.cwiseProduct(d));
  });
}

Var Tape::softplus(Var a) {
  Mat v = val(a).unaryExpr(
      [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); });
  Var out{size()};
  return push(std::move(v), track({a}), [this, a, out] {
    accumulate(a.idx, nodes_[out.idx].grad.cwiseProduct(sigmoid_of(nodes_[a.idx].value)));
  });
}

Var Tape::softmax_rows(Var a) {
  Mat y = val(a);
  for (int r = 0; r < y.rows(); ++r) {
    double m = y.row(r).maxCoeff();
    y.row(r) = (y.row(r).array() - m).exp();
    y.row(r) /= y.row(r).sum();
  }
  Var out{size()};
  return push(std::move(y), track({a}), [this, a, out] {
    const Mat& g = nodes_[out.idx].grad;
    const Mat& y = nodes_[out.idx].value;
    Vec dot = (g.cwiseProduct(y)).rowwise().sum();
    Mat dx = g;
    dx.colwise() -= dot;
    accumulate(a.idx, dx.cwiseProduct(y));
  });
}

Var Tape::logsumexp_rows(Var a) {
  const Mat& x = val(a);
  Mat y(x.rows(), 1);
  for (int r = 0; r < x.rows(); ++r) {
    double m = x.row(r).maxCoeff();
    y(r, 0) = m + std::log((x.row(r).array() - m).exp().sum());
  }
  Var out{size()};
  return push(std::move(y), track({a}), [this, a, out] {
    const Mat& g = nodes_[out.idx].grad;
    const Mat& x = nodes_[a.idx].value;
    const Mat& lse = nodes_[out.idx].value;
    Mat soft = (x.colwise() - lse.col(0)).array().exp().matrix();
    Mat contrib = (soft.array().colwise() * g.col(0).array()).matrix();
    accumulate(a.idx, contrib);
  });
}

Var Tape::layer_norm_rows(Var a, Var gamma, Var beta, double eps) {
  const Mat& x = val(a);
  check(val(gamma).rows() == 1 && val(gamma).cols() == x.cols(), "layer_norm gamma shape");
  check(val(beta).rows() == 1 && val(beta).cols() == x.cols(), "layer_norm beta shape");
  const double inv_e = 1.0 / static_cast<double>(x.cols());
  Vec mu = x.rowwise().mean();
  Mat centered = x.colwise() - mu;
  Vec inv_sigma = ((centered.cwiseAbs2().rowwise().sum() * inv_e).array() + eps).rsqrt().matrix();
  Mat xhat = (centered.array().colwise() * inv_sigma.array()).matrix();
  Mat y = (xhat.array().rowwise() * val(gamma).row(0).array()).matrix();
  y.rowwise() += val(beta).row(0);
  Var out{size()};
  return push(std::move(y), track({a, gamma, beta}),
              [this, a, gamma, beta, xhat, inv_sigma, inv_e, out] {
                const Mat& g = nodes_[out.idx].grad;
                accumulate(beta.idx, Mat(g.colwise().sum()));
                accumulate(gamma.idx, Mat(g.cwiseProduct(xhat).colwise().sum()));
                Mat gh = (g.array().rowwise() * nodes_[gamma.idx].value.row(0).array()).matrix();
                Vec m1 = gh.rowwise().sum() * inv_e;
                Vec m2 = gh.cwiseProduct(xhat).rowwise().sum() * inv_e;
                Mat dx = gh;
                dx.colwise() -= m1;
                dx -= (xhat.array().colwise() * m2.array()).matrix();
                dx = (dx.array().colwise() * inv_sigma.array()).matrix();
                accumulate(a.idx, dx);
              });
}

Var Tape::concat_rows(std::span<const Var> parts) {
  check(!parts.empty(), "concat_rows empty");
  long cols = val(parts[0]).cols();
  long rows = 0;
  for (Var p : parts) {
    check(val(p).cols() == cols, "concat_rows cols");
    rows += val(p).rows();
  }
  Mat v(rows, cols);
  long r = 0;
  bool need = false;
  for (Var p : parts) {
    v.middleRows(r, val(p).rows()) = val(p);
    r += val(p).rows();
    need = need || node(p).requires_grad;
  }
  std::vector<Var> owned(parts.begin(), parts.end());
  Var out{size()};
  return push(std::move(v), grad_enabled_ && need, [this, owned, out] {
    const Mat& g = nodes_[out.idx].grad;
    long r = 0;
    for (Var p : owned) {
      long n = nodes_[p.idx].value.rows();
      accumulate(p.idx, g.middleRows(r, n));
      r += n;
    }
  });
}

Var Tape::concat_cols(std::span<const Var> parts) {
  check(!parts.empty(), "concat_cols empty");
  long rows = val(parts[0]).rows();
  long cols = 0;
  for (Var p : parts) {
    check(val(p).rows() == rows, "concat_cols rows");
    cols += val(p).cols();
  }
  Mat v(rows, cols);
  long c = 0;
  bool need = false;
  for (Var p : parts) {
    v.middleCols(c, val(p).cols()) = val(p);
    c += val(p).cols();
    need = need || node(p).requires_grad;
  }
  std::vector<Var> owned(parts.begin(), parts.end());
  Var out{size()};
  return push(std::move(v), grad_enabled_ && need, [this, owned, out] {
    const Mat& g = nodes_[out.idx].grad;
    long c = 0;
    for (Var p : owned) {
      long n = nodes_[p.idx].value.cols();
      accumulate(p.idx, g.middleCols(c, n));
      c += n;
    }
  });
}

Var Tape::slice_rows(Var a, int r0, int n) {
  check(r0 >= 0 && n >= 1 && r0 + n <= val(a).rows(), "slice_rows range");
  Var out{size()};
  return push(val(a).middleRows(r0, n), track({a}), [this, a, r0, n, out] {
    Mat g = Mat::Zero(nodes_[a.idx].value.rows(), nodes_[a.idx].value.cols());
    g.middleRows(r0, n) = nodes_[out.idx].grad;
    accumulate(a.idx, g);
  });
}

Var Tape::select_rows(Var a, std::vector<int> rows) {
  check(!rows.empty(), "select_rows empty");
  const Mat& x = val(a);
  Mat v(static_cast<long>(rows.size()), x.cols());
  for (size_t i = 0; i < rows.size(); ++i) {
    check(rows[i] >= 0 && rows[i] < x.rows(), "select_rows range");
    v.row(static_cast<long>(i)) = x.row(rows[i]);
  }
  Var out{size()};
  return push(std::move(v), track({a}), [this, a, rows, out] {
    const Mat& g = nodes_[out.idx].grad;
    Mat ga = Mat::Zero(nodes_[a.idx].value.rows(), nodes_[a.idx].value.cols());
    for (size_t i = 0; i < rows.size(); ++i) {
      ga.row(rows[i]) += g.row(static_cast<long>(i));
    }
    accumulate(a.idx, ga);
  });
}

Var Tape::slice_cols(Var a, int c0, int n) {
  check(c0 >= 0 && n >= 1 && c0 + n <= val(a).cols(), "slice_cols range");
  Var out{size()};
  return push(val(a).middleCols(c0, n), track({a}), [this, a, c0, n, out] {
    Mat g = Mat::Zero(nodes_[a.idx].value.rows(), nodes_[a.idx].value.cols());
    g.middleCols(c0, n) = nodes_[out.idx].grad;
    accumulate(a.idx, g);
  });
}

Var Tape::pick(Var a, int r, int c) {
  check(r >= 0 && r < val(a).rows() && c >= 0 && c < val(a).cols(), "pick range");
  Var out{size()};
  Mat v(1, 1);
  v(0, 0) = val(a)(r, c);
  return push(std::move(v), track({a}), [this, a, r, c, out] {
    Mat g = Mat::Zero(nodes_[a.idx].value.rows(), nodes_[a.idx].value.cols());
    g(r, c) = nodes_[out.idx].grad(0, 0);
    accumulate(a.idx, g);
  });
}

Var Tape::sum(Var a) {
  Mat v(1, 1);
  v(0, 0) = val(a).sum();
  Var out{size()};
  return push(std::move(v), track({a}), [this, a, out] {
    double g = nodes_[out.idx].grad(0, 0);
    accumulate(a.idx, Mat(Mat::Constant(nodes_[a.idx].value.rows(),
                                        nodes_[a.idx].value.cols(), g)));
  });
}

Var Tape::dot_const(Var a, const Mat& weights) {
  check(weights.rows() == val(a).rows() && weights.cols() == val(a).cols(), "dot_const shape");
  Mat v(1, 1);
  v(0, 0) = val(a).cwiseProduct(weights).sum();
  Var out{size()};
  return push(std::move(v), track({a}), [this, a, weights, out] {
    accumulate(a.idx, Mat(weights * nodes_[out.idx].grad(0, 0)));
  });
}

Var Tape::mask_fill(Var a, const Mat& mask, double value) {
  check(mask.rows() == val(a).rows() && mask.cols() == val(a).cols(), "mask_fill shape");
  Mat v = val(a);
  for (int r = 0; r < v.rows(); ++r) {
    for (int c = 0; c < v.cols(); ++c) {
      if (mask(r, c) != 0.0) v(r, c) = value;
    }
  }
  Var out{size()};
  return push(std::move(v), track({a}), [this, a, mask, out] {
    Mat g = nodes_[out.idx].grad;
    for (int r = 0; r < g.rows(); ++r) {
      for (int c = 0; c < g.cols(); ++c) {
        if (mask(r, c) != 0.0) g(r, c) = 0.0;
      }
    }
    accumulate(a.idx, g);
  });
}

Var Tape::gather(Var table, const Eigen::MatrixXi& idx) {
  check(val(table).rows() == 1, "gather table must be a row");
  const Mat& t = val(table);
  Mat v(idx.rows(), idx.cols());
  for (int r = 0; r < idx.rows(); ++r) {
    for (int c = 0; c < idx.cols(); ++c) {
      check(idx(r, c) >= 0 && idx(r, c) < t.cols(), "gather index range");
      v(r, c) = t(0, idx(r, c));
    }
  }
  Var out{size()};
  return push(std::move(v), track({table}), [this, table, idx, out] {
    const Mat& g = nodes_[out.idx].grad;
    Mat gt = Mat::Zero(1, nodes_[table.idx].value.cols());
    for (int r = 0; r < idx.rows(); ++r) {
      for (int c = 0; c < idx.cols(); ++c) {
        gt(0, idx(r, c)) += g(r, c);
      }
    }
    accumulate(table.idx, gt);
  });
}

void Tape::backward(Var loss) {
  check(grad_enabled_, "backward on a no-grad tape");
  check(val(loss).rows() == 1 && val(loss).cols() == 1, "loss must be 1x1");
  Node& ln = node(loss);
  check(ln.requires_grad, "loss does not depend on any leaf");
  ln.grad = Mat::Ones(1, 1);
  for (int i = loss.idx; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.grad.size() != 0 && n.back) n.back();
  }
}

}  // namespace genrt
