#pragma once

#include <cstdint>
#include <utility>

#include "linematch/autodiff.hpp"
#include "linematch/errors.hpp"

namespace linematch {

/// k^l = max(0.4 / 2^l, 0.1) for layer l >= 1.
double layer_keep_ratio(int layer);

/// Number of neighbours ceil(k n) kept per node, clamped to [1, n].
int neighbour_count(double keep_ratio, int n, Diagnostics* diag = nullptr);

/// Learnable weights of one graph block. Shapes (p = input width, q = output width,
/// r = attention width): omega p x r, a_vec 2r x 1, theta1/theta2 p x q, w_cross 2q x q.
struct GraphLayerParams {
  Parameter omega;
  Parameter a_vec;
  Parameter theta1;
  Parameter theta2;
  Parameter w_cross;
  double keep_ratio = 0.2;

  static GraphLayerParams init(int layer, int in_width, int out_width, int attention_width, std::uint64_t seed);
  int in_width() const { return static_cast<int>(theta1.value.rows()); }
  int out_width() const { return static_cast<int>(theta1.value.cols()); }
};

/// a_ij = ReLU(a^T [Omega f_i || Omega f_j]) over all node pairs, with
/// `omega` stored as p x r so that Omega f_i is row i of F * omega.
ad::Var relation_scores(ad::Var features, ad::Var a_vec, ad::Var omega);

/// Selection mask of the per-row top ceil(k n) entries among the n detected
/// columns (ties to the lower index; zero scores are never selected). With
/// `strict`, (i,j) survives only when i and j select each other. Row/column n
/// (the dustbin) selects nothing.
Matrix topk_mask(const Matrix& scores, int neighbours, int n, bool strict);

struct Adjacency {
  ad::Var sparse_scores;  // A_s
  ad::Var adjacency;      // A
  int neighbours = 0;
};

/// A_s = scores restricted to the mutual top-k mask; A = tanh(A_s A_s^T) / ceil(k n)
/// with the dustbin row and column zeroed.
Adjacency mutual_topk_adjacency(ad::Var scores, double keep_ratio, int n, bool strict = true,
                                Diagnostics* diag = nullptr);

/// Fixed fully connected adjacency 1/n among the n detected nodes (ablation baseline).
Matrix full_adjacency(int n);

/// F' = ReLU(A F Theta1) + ReLU(F Theta2).
ad::Var intra_conv(ad::Var adjacency, ad::Var features, ad::Var theta1, ad::Var theta2);

/// Cross-graph update with dustbin rows aggregating nothing:
///   Fa'(1:n) = [P(1:n,:) Fb || Fa(1:n)] W,     Fa'(n+1) = [0 || Fa(n+1)] W
///   Fb'(1:m) = [(P^T)(1:m,:) Fa || Fb(1:m)] W, Fb'(m+1) = [0 || Fb(m+1)] W
std::pair<ad::Var, ad::Var> cross_conv(ad::Var fa, ad::Var fb, ad::Var assignment, ad::Var w_cross);

}  // namespace linematch
