#include "linematch/graphnet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace linematch {

double layer_keep_ratio(int layer) {
  if (layer < 1) throw ValidationError("layer index must be >= 1");
  return std::max(0.4 / std::pow(2.0, layer), 0.1);
}

int neighbour_count(double keep_ratio, int n, Diagnostics* diag) {
  if (!(keep_ratio > 0.0 && keep_ratio <= 1.0)) throw ValidationError("keep ratio must lie in (0, 1]");
  if (n < 1) return 0;
  // The epsilon absorbs round-off in products like 0.1 * 30.
  int k = static_cast<int>(std::ceil(keep_ratio * n - 1e-9));
  if (k > n) {
    warn(diag, "neighbour count " + std::to_string(k) + " exceeds " + std::to_string(n) + ", clamped");
    k = n;
  }
  return std::max(k, 1);
}

namespace {

Matrix random_matrix(int rows, int cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

}  // namespace

GraphLayerParams GraphLayerParams::init(int layer, int in_width, int out_width, int attention_width,
                                        std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::string prefix = "graph" + std::to_string(layer) + ".";
  GraphLayerParams p;
  p.omega = {prefix + "omega", random_matrix(in_width, attention_width, std::sqrt(1.0 / in_width), rng)};
  p.a_vec = {prefix + "a", random_matrix(2 * attention_width, 1, std::sqrt(1.0 / attention_width), rng)};
  p.theta1 = {prefix + "theta1", random_matrix(in_width, out_width, std::sqrt(2.0 / in_width), rng)};
  p.theta2 = {prefix + "theta2", random_matrix(in_width, out_width, std::sqrt(2.0 / in_width), rng)};
  p.w_cross = {prefix + "w_cross", random_matrix(2 * out_width, out_width, std::sqrt(1.0 / (2 * out_width)), rng)};
  p.keep_ratio = layer_keep_ratio(layer);
  return p;
}

ad::Var relation_scores(ad::Var features, ad::Var a_vec, ad::Var omega) {
  if (features.cols() != omega.rows())
    throw DimensionError("relation_scores: feature width " + std::to_string(features.cols()) +
                         " does not match omega rows " + std::to_string(omega.rows()));
  const Eigen::Index r = omega.cols();
  if (a_vec.rows() != 2 * r || a_vec.cols() != 1)
    throw DimensionError("relation_scores: attention vector must be 2r x 1");
  std::vector<int> first(static_cast<std::size_t>(r)), second(static_cast<std::size_t>(r));
  std::iota(first.begin(), first.end(), 0);
  std::iota(second.begin(), second.end(), static_cast<int>(r));
  ad::Var projected = ad::matmul(features, omega);                               // (n+1) x r
  ad::Var left = ad::matmul(projected, ad::gather_rows(a_vec, first));            // (n+1) x 1
  ad::Var right = ad::matmul(projected, ad::gather_rows(a_vec, second));          // (n+1) x 1
  return ad::relu(ad::outer_sum(left, ad::transpose(right)));
}

Matrix topk_mask(const Matrix& scores, int neighbours, int n, bool strict) {
  const Eigen::Index size = scores.rows();
  if (scores.cols() != size) throw DimensionError("topk_mask: scores must be square");
  if (n < 0 || n > size - 1) throw DimensionError("topk_mask: detected count exceeds node count");
  Matrix sel = Matrix::Zero(size, size);
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < std::min<int>(n, static_cast<int>(size)); ++i) {
    std::iota(order.begin(), order.end(), 0);
    const int k = std::min(neighbours, n);
    std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int a, int b) {
      const double sa = scores(i, a), sb = scores(i, b);
      return sa > sb || (sa == sb && a < b);
    });
    // A zero score is no relation; skipping it keeps tie-breaks on zeros from
    // deciding mutuality.
    for (int t = 0; t < k; ++t)
      if (scores(i, order[t]) > 0.0) sel(i, order[t]) = 1.0;
  }
  if (strict) sel = sel.cwiseProduct(sel.transpose());
  return sel;
}

Adjacency mutual_topk_adjacency(ad::Var scores, double keep_ratio, int n, bool strict, Diagnostics* diag) {
  if (scores.rows() != scores.cols() || scores.rows() != n + 1)
    throw DimensionError("mutual_topk_adjacency: scores must be (n+1) x (n+1)");
  if ((scores.value().array() < 0.0).any()) throw ValidationError("mutual_topk_adjacency: negative scores");
  Adjacency out;
  out.neighbours = neighbour_count(keep_ratio, n, diag);
  ad::Tape* tape = scores.tape();
  if (n == 0) {
    out.sparse_scores = ad::mask(scores, Matrix::Zero(1, 1));
    out.adjacency = tape->constant(Matrix::Zero(1, 1));
    return out;
  }
  out.sparse_scores = ad::mask(scores, topk_mask(scores.value(), out.neighbours, n, strict));
  ad::Var product = ad::matmul(out.sparse_scores, ad::transpose(out.sparse_scores));
  Matrix keep = Matrix::Constant(n + 1, n + 1, 1.0 / out.neighbours);
  keep.row(n).setZero();
  keep.col(n).setZero();
  out.adjacency = ad::mask(ad::tanh(product), keep);
  return out;
}

Matrix full_adjacency(int n) {
  Matrix a = Matrix::Zero(n + 1, n + 1);
  if (n > 0) a.topLeftCorner(n, n).setConstant(1.0 / n);
  return a;
}

ad::Var intra_conv(ad::Var adjacency, ad::Var features, ad::Var theta1, ad::Var theta2) {
  if (adjacency.rows() != features.rows() || adjacency.cols() != features.rows())
    throw DimensionError("intra_conv: adjacency does not match the node count");
  if (theta1.rows() != features.cols() || theta2.rows() != features.cols() || theta1.cols() != theta2.cols())
    throw DimensionError("intra_conv: weight shapes do not match the feature width");
  ad::Var neighbours = ad::relu(ad::matmul(ad::matmul(adjacency, features), theta1));
  ad::Var self = ad::relu(ad::matmul(features, theta2));
  return neighbours + self;
}

std::pair<ad::Var, ad::Var> cross_conv(ad::Var fa, ad::Var fb, ad::Var assignment, ad::Var w_cross) {
  const Eigen::Index na = fa.rows(), nb = fb.rows();
  if (assignment.rows() != na || assignment.cols() != nb)
    throw DimensionError("cross_conv: assignment must be (n+1) x (m+1)");
  if (fa.cols() != fb.cols()) throw DimensionError("cross_conv: feature widths differ");
  if (w_cross.rows() != 2 * fa.cols()) throw DimensionError("cross_conv: W must have 2p rows");
  // Zeroing the dustbin row of P (and of P^T) makes the dustbin aggregate nothing.
  Matrix keep_a = Matrix::Ones(na, nb);
  keep_a.row(na - 1).setZero();
  Matrix keep_b = Matrix::Ones(nb, na);
  keep_b.row(nb - 1).setZero();
  ad::Var agg_a = ad::matmul(ad::mask(assignment, keep_a), fb);
  // B aggregates through rows of P^T, i.e. columns of P; slicing rows of P
  // before transposing would not be shape-consistent when n != m.
  ad::Var agg_b = ad::matmul(ad::mask(ad::transpose(assignment), keep_b), fa);
  ad::Var out_a = ad::matmul(ad::hcat(agg_a, fa), w_cross);
  ad::Var out_b = ad::matmul(ad::hcat(agg_b, fb), w_cross);
  return {out_a, out_b};
}

}  // namespace linematch
