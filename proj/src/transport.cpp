#include "linematch/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "linematch/errors.hpp"

namespace linematch {

std::pair<Vector, Vector> dustbin_marginals(int n, int m) {
  if (n < 0 || m < 0) throw ValidationError("negative line count");
  Vector a = Vector::Ones(n + 1), b = Vector::Ones(m + 1);
  a(n) = m;
  b(m) = n;
  return {a, b};
}

ad::Var affinity(ad::Var fa, ad::Var fb, ad::Var weight, double delta) {
  if (!(delta > 0.0)) throw ValidationError("affinity: delta must be positive");
  if (fa.cols() != weight.rows() || fb.cols() != weight.cols())
    throw DimensionError("affinity: weight shape does not match the embeddings");
  return ad::scale(ad::matmul(ad::matmul(fa, weight), ad::transpose(fb)), 1.0 / delta);
}

Matrix affinity(const Matrix& fa, const Matrix& fb, const Matrix& weight, double delta) {
  ad::Tape tape;
  return affinity(tape.constant(fa), tape.constant(fb), tape.constant(weight), delta).value();
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Scatters `sub` into a rows x cols matrix at (row_idx, col_idx); other entries are `fill`.
ad::Var embed(ad::Var sub, const std::vector<int>& row_idx, const std::vector<int>& col_idx, Eigen::Index rows,
              Eigen::Index cols, double fill) {
  Matrix out = Matrix::Constant(rows, cols, fill);
  for (std::size_t i = 0; i < row_idx.size(); ++i)
    for (std::size_t j = 0; j < col_idx.size(); ++j)
      out(row_idx[i], col_idx[j]) = sub.value()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  const int is = sub.id();
  return sub.tape()->push(std::move(out), {sub}, [is, row_idx, col_idx](ad::Tape& t, const Matrix& g) {
    Matrix gs(static_cast<Eigen::Index>(row_idx.size()), static_cast<Eigen::Index>(col_idx.size()));
    for (std::size_t i = 0; i < row_idx.size(); ++i)
      for (std::size_t j = 0; j < col_idx.size(); ++j)
        gs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = g(row_idx[i], col_idx[j]);
    t.accumulate(is, gs);
  });
}

SinkhornResult sinkhorn_positive(ad::Var logits, const Vector& a, const Vector& b, const SinkhornConfig& config) {
  ad::Tape& tape = *logits.tape();
  const Matrix log_a = a.array().log().matrix();
  const Matrix log_b_row = b.array().log().matrix().transpose();
  ad::Var la = tape.constant(log_a);
  ad::Var lb = tape.constant(log_b_row);
  ad::Var v = tape.constant(Matrix::Zero(1, logits.cols()));
  ad::Var u;
  SinkhornResult res;
  for (int it = 0; it < config.max_iters; ++it) {
    u = ad::sub(la, ad::logsumexp_rows_offset(logits, v));
    v = ad::sub(lb, ad::logsumexp_cols_offset(logits, u));
    res.iterations = it + 1;
    // Columns are exact after the v update; the row residual decides convergence.
    const Matrix log_p = (logits.value().colwise() + u.value().col(0)).rowwise() + v.value().row(0);
    const double row_res = (log_p.array().exp().rowwise().sum().matrix() - a).cwiseAbs().maxCoeff();
    res.residual = row_res;
    if (row_res <= config.tol) {
      res.converged = true;
      break;
    }
  }
  if (config.max_iters <= 0) u = ad::sub(la, ad::logsumexp_rows_offset(logits, v));
  res.log_plan = ad::add_row_vector(ad::add_col_vector(logits, u), v);
  res.plan = res.log_plan.value().array().exp();
  const double col_res = (res.plan.colwise().sum().transpose() - b).cwiseAbs().maxCoeff();
  res.residual = std::max(res.residual, col_res);
  return res;
}

}  // namespace

SinkhornResult sinkhorn(ad::Var logits, const Vector& a, const Vector& b, const SinkhornConfig& config) {
  if (a.size() != logits.rows() || b.size() != logits.cols())
    throw DimensionError("sinkhorn: marginal sizes do not match the affinity");
  if ((a.array() < 0.0).any() || (b.array() < 0.0).any()) throw ValidationError("sinkhorn: negative marginal");
  const double sa = a.sum(), sb = b.sum();
  if (std::abs(sa - sb) > 1e-9 * std::max(1.0, std::abs(sa)))
    throw ValidationError("sinkhorn: marginals do not balance");
  if (!logits.value().allFinite()) throw ValidationError("sinkhorn: non-finite affinity");

  std::vector<int> rows, cols;
  for (Eigen::Index i = 0; i < a.size(); ++i)
    if (a(i) > 0.0) rows.push_back(static_cast<int>(i));
  for (Eigen::Index j = 0; j < b.size(); ++j)
    if (b(j) > 0.0) cols.push_back(static_cast<int>(j));
  if (rows.size() == static_cast<std::size_t>(a.size()) && cols.size() == static_cast<std::size_t>(b.size()))
    return sinkhorn_positive(logits, a, b, config);

  ad::Tape& tape = *logits.tape();
  SinkhornResult res;
  if (rows.empty() || cols.empty()) {
    res.log_plan = tape.constant(Matrix::Constant(a.size(), b.size(), kNegInf));
    res.plan = Matrix::Zero(a.size(), b.size());
    res.converged = true;
    return res;
  }
  Vector sub_a(rows.size()), sub_b(cols.size());
  for (std::size_t i = 0; i < rows.size(); ++i) sub_a(static_cast<Eigen::Index>(i)) = a(rows[i]);
  for (std::size_t j = 0; j < cols.size(); ++j) sub_b(static_cast<Eigen::Index>(j)) = b(cols[j]);
  ad::Var sub_logits = ad::gather_cols(ad::gather_rows(logits, rows), cols);
  SinkhornResult sub = sinkhorn_positive(sub_logits, sub_a, sub_b, config);
  res.log_plan = embed(sub.log_plan, rows, cols, a.size(), b.size(), kNegInf);
  res.plan = res.log_plan.value().array().exp();
  res.converged = sub.converged;
  res.iterations = sub.iterations;
  res.residual = sub.residual;
  return res;
}

SinkhornResult sinkhorn(const Matrix& logits, const Vector& a, const Vector& b, const SinkhornConfig& config) {
  ad::Tape tape;
  SinkhornResult r = sinkhorn(tape.constant(logits), a, b, config);
  r.log_plan = {};
  return r;
}

TransportSolution solve_matching(ad::Var fa, ad::Var fb, ad::Var weight, double delta, const SinkhornConfig& config) {
  if (fa.rows() < 1 || fb.rows() < 1) throw DimensionError("solve_matching: embeddings must include the dustbin row");
  TransportSolution sol;
  sol.logits = affinity(fa, fb, weight, delta);
  const auto [a, b] = dustbin_marginals(static_cast<int>(fa.rows()) - 1, static_cast<int>(fb.rows()) - 1);
  sol.sinkhorn = sinkhorn(sol.logits, a, b, config);
  return sol;
}

MatchSet extract_matches(const Matrix& plan, double score_floor) {
  const int n = static_cast<int>(plan.rows()) - 1, m = static_cast<int>(plan.cols()) - 1;
  if (n < 0 || m < 0) throw DimensionError("extract_matches: plan must include dustbins");
  MatchSet out;
  std::vector<char> used_b(static_cast<std::size_t>(m), 0);
  for (int i = 0; i < n; ++i) {
    Eigen::Index j;
    plan.row(i).maxCoeff(&j);
    bool matched = false;
    if (j < m) {
      Eigen::Index back;
      plan.col(j).maxCoeff(&back);
      if (back == i && plan(i, j) >= score_floor) {
        out.matches.push_back({i, static_cast<int>(j), plan(i, j)});
        used_b[static_cast<std::size_t>(j)] = 1;
        matched = true;
      }
    }
    if (!matched) out.unmatched_a.push_back(i);
  }
  for (int j = 0; j < m; ++j)
    if (!used_b[static_cast<std::size_t>(j)]) out.unmatched_b.push_back(j);
  return out;
}

}  // namespace linematch
