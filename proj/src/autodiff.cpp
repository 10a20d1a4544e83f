#include "linematch/autodiff.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "linematch/errors.hpp"

namespace linematch::ad {

namespace {

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const char* op, Var a, Var b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape(a.value()) + " vs " +
                         shape(b.value()));
}

void require_same_tape(Var a, Var b) {
  if (a.tape() != b.tape()) throw ValidationError("operands recorded on different tapes");
}

}  // namespace

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::variable(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, true, {}});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::parameter(const Parameter& p) {
  Var v = variable(p.value);
  params_.emplace_back(v.id(), &p);
  return v;
}

Var Tape::push(Matrix value, std::initializer_list<Var> parents, Backward backward) {
  bool needs = false;
  for (const Var& p : parents) {
    if (p.tape() != this) throw ValidationError("operand recorded on a different tape");
    needs = needs || p.requires_grad();
  }
  nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(backward) : Backward{}});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::backward(Var root) {
  if (root.tape() != this) throw ValidationError("backward root recorded on a different tape");
  if (root.rows() != 1 || root.cols() != 1)
    throw DimensionError("backward root must be a 1x1 scalar, got " + shape(root.value()));
  for (auto& n : nodes_) n.grad.resize(0, 0);
  if (!root.requires_grad()) return;
  nodes_[root.id()].grad = Matrix::Ones(1, 1);
  for (int id = root.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0 || !n.backward) continue;
    n.backward(*this, n.grad);
  }
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::accumulate(int id, const Matrix& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0)
    n.grad = g;
  else
    n.grad += g;
}

Matrix& Tape::grad_buffer(int id) {
  Node& n = nodes_[id];
  // Callers only write into buffers of nodes that need gradients; others get a scratch matrix.
  if (!n.requires_grad) {
    scratch_ = Matrix::Zero(n.value.rows(), n.value.cols());
    return scratch_;
  }
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

std::vector<std::pair<const Parameter*, Matrix>> Tape::parameter_grads() const {
  std::vector<std::pair<const Parameter*, Matrix>> out;
  out.reserve(params_.size());
  for (const auto& [id, p] : params_) out.emplace_back(p, grad(Var(const_cast<Tape*>(this), id)));
  return out;
}

Var add(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape("add", a, b);
  const int ia = a.id(), ib = b.id();
  return a.tape()->push(a.value() + b.value(), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

Var sub(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape("sub", a, b);
  const int ia = a.id(), ib = b.id();
  return a.tape()->push(a.value() - b.value(), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, -g);
  });
}

Var cmul(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape("cmul", a, b);
  const int ia = a.id(), ib = b.id();
  return a.tape()->push(a.value().cwiseProduct(b.value()), {a, b},
                        [ia, ib](Tape& t, const Matrix& g) {
                          t.accumulate(ia, g.cwiseProduct(t.value(ib)));
                          t.accumulate(ib, g.cwiseProduct(t.value(ia)));
                        });
}

Var mask(Var a, const Matrix& m) {
  if (a.rows() != m.rows() || a.cols() != m.cols())
    throw DimensionError("mask: shape mismatch " + shape(a.value()) + " vs " + shape(m));
  const int ia = a.id();
  return a.tape()->push(a.value().cwiseProduct(m), {a},
                        [ia, m](Tape& t, const Matrix& g) { t.accumulate(ia, g.cwiseProduct(m)); });
}

Var scale(Var a, double s) {
  const int ia = a.id();
  return a.tape()->push(a.value() * s, {a},
                        [ia, s](Tape& t, const Matrix& g) { t.accumulate(ia, g * s); });
}

Var add_scalar(Var a, double s) {
  const int ia = a.id();
  return a.tape()->push(a.value().array() + s, {a},
                        [ia](Tape& t, const Matrix& g) { t.accumulate(ia, g); });
}

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  if (a.cols() != b.rows())
    throw DimensionError("matmul: inner dimensions differ " + shape(a.value()) + " * " +
                         shape(b.value()));
  const int ia = a.id(), ib = b.id();
  Matrix out = a.value() * b.value();
  return a.tape()->push(std::move(out), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

Var transpose(Var a) {
  const int ia = a.id();
  return a.tape()->push(a.value().transpose(), {a},
                        [ia](Tape& t, const Matrix& g) { t.accumulate(ia, g.transpose()); });
}

Var relu(Var a) {
  const int ia = a.id();
  return a.tape()->push(a.value().cwiseMax(0.0), {a}, [ia](Tape& t, const Matrix& g) {
    const Matrix& x = t.value(ia);
    t.accumulate(ia, (x.array() > 0.0).select(g, 0.0));
  });
}

Var tanh(Var a) {
  const int ia = a.id();
  Matrix y = a.value().array().tanh();
  Tape* tape = a.tape();
  const int out_id = static_cast<int>(tape->size());
  return tape->push(std::move(y), {a}, [ia, out_id](Tape& t, const Matrix& g) {
    const Matrix& y = t.value(out_id);
    t.accumulate(ia, g.array() * (1.0 - y.array().square()));
  });
}

Var exp(Var a) {
  const int ia = a.id();
  Tape* tape = a.tape();
  const int out_id = static_cast<int>(tape->size());
  return tape->push(a.value().array().exp(), {a}, [ia, out_id](Tape& t, const Matrix& g) {
    t.accumulate(ia, g.cwiseProduct(t.value(out_id)));
  });
}

Var log(Var a) {
  const int ia = a.id();
  return a.tape()->push(a.value().array().log(), {a}, [ia](Tape& t, const Matrix& g) {
    t.accumulate(ia, g.array() / t.value(ia).array());
  });
}

Var cos(Var a) {
  const int ia = a.id();
  return a.tape()->push(a.value().array().cos(), {a}, [ia](Tape& t, const Matrix& g) {
    t.accumulate(ia, -g.array() * t.value(ia).array().sin());
  });
}

Var sum(Var a) {
  const int ia = a.id();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  const auto r = a.rows(), c = a.cols();
  return a.tape()->push(std::move(out), {a}, [ia, r, c](Tape& t, const Matrix& g) {
    t.accumulate(ia, Matrix::Constant(r, c, g(0, 0)));
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw DimensionError("mean of an empty matrix");
  return scale(sum(a), 1.0 / n);
}

Var add_row_vector(Var a, Var row) {
  require_same_tape(a, row);
  if (row.rows() != 1 || row.cols() != a.cols())
    throw DimensionError("add_row_vector: " + shape(a.value()) + " + " + shape(row.value()));
  const int ia = a.id(), ir = row.id();
  Matrix out = a.value().rowwise() + row.value().row(0);
  return a.tape()->push(std::move(out), {a, row}, [ia, ir](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ir, g.colwise().sum());
  });
}

Var add_col_vector(Var a, Var col) {
  require_same_tape(a, col);
  if (col.cols() != 1 || col.rows() != a.rows())
    throw DimensionError("add_col_vector: " + shape(a.value()) + " + " + shape(col.value()));
  const int ia = a.id(), ic = col.id();
  Matrix out = a.value().colwise() + col.value().col(0);
  return a.tape()->push(std::move(out), {a, col}, [ia, ic](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ic, g.rowwise().sum());
  });
}

Var outer_sum(Var col, Var row) {
  require_same_tape(col, row);
  if (col.cols() != 1 || row.rows() != 1)
    throw DimensionError("outer_sum: expects a column and a row, got " + shape(col.value()) +
                         " and " + shape(row.value()));
  const int ic = col.id(), ir = row.id();
  Matrix out = col.value().replicate(1, row.cols()).rowwise() + row.value().row(0);
  return col.tape()->push(std::move(out), {col, row}, [ic, ir](Tape& t, const Matrix& g) {
    t.accumulate(ic, g.rowwise().sum());
    t.accumulate(ir, g.colwise().sum());
  });
}

namespace {

// Stable row-wise log-sum-exp; rows that are entirely -inf yield -inf.
Matrix lse_rows(const Matrix& x) {
  Matrix out(x.rows(), 1);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mx = x.row(i).maxCoeff();
    if (!std::isfinite(mx)) {
      out(i, 0) = mx;
      continue;
    }
    out(i, 0) = mx + std::log((x.row(i).array() - mx).exp().sum());
  }
  return out;
}

// Softmax weights exp(x - lse) for the backward passes; -inf lse rows give zeros.
Matrix softmax_rows(const Matrix& x, const Matrix& lse) {
  Matrix w(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    if (!std::isfinite(lse(i, 0)))
      w.row(i).setZero();
    else
      w.row(i) = (x.row(i).array() - lse(i, 0)).exp();
  }
  return w;
}

}  // namespace

Var logsumexp_rows(Var a) {
  const int ia = a.id();
  Tape* tape = a.tape();
  const int out_id = static_cast<int>(tape->size());
  return tape->push(lse_rows(a.value()), {a}, [ia, out_id](Tape& t, const Matrix& g) {
    Matrix w = softmax_rows(t.value(ia), t.value(out_id));
    t.accumulate(ia, w.array().colwise() * g.col(0).array());
  });
}

Var logsumexp_cols(Var a) {
  return transpose(logsumexp_rows(transpose(a)));
}

Var logsumexp_rows_offset(Var a, Var offset) {
  require_same_tape(a, offset);
  if (offset.rows() != 1 || offset.cols() != a.cols())
    throw DimensionError("logsumexp_rows_offset: " + shape(a.value()) + " with offset " +
                         shape(offset.value()));
  const int ia = a.id(), io = offset.id();
  Matrix shifted = a.value().rowwise() + offset.value().row(0);
  Matrix out = lse_rows(shifted);
  Tape* tape = a.tape();
  const int out_id = static_cast<int>(tape->size());
  return tape->push(std::move(out), {a, offset},
                    [ia, io, out_id, shifted = std::move(shifted)](Tape& t, const Matrix& g) {
                      Matrix w = softmax_rows(shifted, t.value(out_id));
                      w.array().colwise() *= g.col(0).array();
                      if (t.requires_grad(ia)) t.accumulate(ia, w);
                      if (t.requires_grad(io)) t.accumulate(io, w.colwise().sum());
                    });
}

Var logsumexp_cols_offset(Var a, Var offset) {
  require_same_tape(a, offset);
  if (offset.cols() != 1 || offset.rows() != a.rows())
    throw DimensionError("logsumexp_cols_offset: " + shape(a.value()) + " with offset " +
                         shape(offset.value()));
  const int ia = a.id(), io = offset.id();
  Matrix shifted_t = (a.value().colwise() + offset.value().col(0)).transpose();
  Matrix lse = lse_rows(shifted_t);
  Matrix out = lse.transpose();
  return a.tape()->push(
      std::move(out), {a, offset},
      [ia, io, shifted_t = std::move(shifted_t), lse = std::move(lse)](Tape& t, const Matrix& g) {
        Matrix w = softmax_rows(shifted_t, lse);
        w.array().colwise() *= g.row(0).transpose().array();
        Matrix wt = w.transpose();
        if (t.requires_grad(ia)) t.accumulate(ia, wt);
        if (t.requires_grad(io)) t.accumulate(io, wt.rowwise().sum());
      });
}

Var hcat(Var a, Var b) {
  require_same_tape(a, b);
  if (a.rows() != b.rows())
    throw DimensionError("hcat: row counts differ " + shape(a.value()) + " | " + shape(b.value()));
  const int ia = a.id(), ib = b.id();
  const auto ca = a.cols(), cb = b.cols();
  Matrix out(a.rows(), ca + cb);
  out << a.value(), b.value();
  return a.tape()->push(std::move(out), {a, b}, [ia, ib, ca, cb](Tape& t, const Matrix& g) {
    t.accumulate(ia, g.leftCols(ca));
    t.accumulate(ib, g.rightCols(cb));
  });
}

Var vcat(Var a, Var b) {
  require_same_tape(a, b);
  if (a.cols() != b.cols())
    throw DimensionError("vcat: column counts differ " + shape(a.value()) + " / " +
                         shape(b.value()));
  const int ia = a.id(), ib = b.id();
  const auto ra = a.rows(), rb = b.rows();
  Matrix out(ra + rb, a.cols());
  out << a.value(), b.value();
  return a.tape()->push(std::move(out), {a, b}, [ia, ib, ra, rb](Tape& t, const Matrix& g) {
    t.accumulate(ia, g.topRows(ra));
    t.accumulate(ib, g.bottomRows(rb));
  });
}

Var gather_rows(Var a, std::span<const int> rows) {
  std::vector<int> idx(rows.begin(), rows.end());
  Matrix out(static_cast<Eigen::Index>(idx.size()), a.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] < 0 || idx[k] >= a.rows())
      throw DimensionError("gather_rows: index " + std::to_string(idx[k]) + " out of range");
    out.row(static_cast<Eigen::Index>(k)) = a.value().row(idx[k]);
  }
  const int ia = a.id();
  return a.tape()->push(std::move(out), {a}, [ia, idx = std::move(idx)](Tape& t, const Matrix& g) {
    Matrix& buf = t.grad_buffer(ia);
    for (std::size_t k = 0; k < idx.size(); ++k) buf.row(idx[k]) += g.row(static_cast<Eigen::Index>(k));
  });
}

Var gather_cols(Var a, std::span<const int> cols) {
  return transpose(gather_rows(transpose(a), cols));
}

Var normalize_rows(Var a, double eps) {
  const int ia = a.id();
  const Eigen::Index c = a.cols();
  Vector norms = a.value().rowwise().norm();
  Matrix out(a.rows(), c);
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    if (norms(i) > eps)
      out.row(i) = a.value().row(i) / norms(i);
    else
      out.row(i).setConstant(c > 0 ? 1.0 / std::sqrt(static_cast<double>(c)) : 0.0);
  }
  Tape* tape = a.tape();
  const int out_id = static_cast<int>(tape->size());
  return tape->push(std::move(out), {a},
                    [ia, out_id, eps, norms = std::move(norms)](Tape& t, const Matrix& g) {
                      const Matrix& y = t.value(out_id);
                      // d(x/|x|) = (g - y (y.g)) / |x|
                      Vector dots = (g.cwiseProduct(y)).rowwise().sum();
                      Matrix dx = g - (y.array().colwise() * dots.array()).matrix();
                      for (Eigen::Index i = 0; i < dx.rows(); ++i) {
                        if (norms(i) > eps)
                          dx.row(i) /= norms(i);
                        else
                          dx.row(i).setZero();
                      }
                      t.accumulate(ia, dx);
                    });
}

Var pick(Var a, std::span<const std::pair<int, int>> entries) {
  std::vector<std::pair<int, int>> idx(entries.begin(), entries.end());
  Matrix out(static_cast<Eigen::Index>(idx.size()), 1);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const auto [r, c] = idx[k];
    if (r < 0 || r >= a.rows() || c < 0 || c >= a.cols())
      throw DimensionError("pick: entry (" + std::to_string(r) + "," + std::to_string(c) +
                           ") out of range for " + shape(a.value()));
    out(static_cast<Eigen::Index>(k), 0) = a.value()(r, c);
  }
  const int ia = a.id();
  return a.tape()->push(std::move(out), {a}, [ia, idx = std::move(idx)](Tape& t, const Matrix& g) {
    Matrix& buf = t.grad_buffer(ia);
    for (std::size_t k = 0; k < idx.size(); ++k)
      buf(idx[k].first, idx[k].second) += g(static_cast<Eigen::Index>(k), 0);
  });
}

}  // namespace linematch::ad
