#pragma once

#include <utility>

#include "linematch/autodiff.hpp"
#include "linematch/types.hpp"

namespace linematch {

struct SinkhornConfig {
  int max_iters = 100;
  double tol = 1e-6;
};

/// Marginals a = [1^n, m] and b = [1^m, n].
std::pair<Vector, Vector> dustbin_marginals(int n, int m);

/// Logits of the affinity M = exp(Fa C Fb^T / delta). M itself is never
/// materialised by the solver; take exp() of the logits when needed.
ad::Var affinity(ad::Var fa, ad::Var fb, ad::Var weight, double delta);
Matrix affinity(const Matrix& fa, const Matrix& fb, const Matrix& weight, double delta);

struct SinkhornResult {
  ad::Var log_plan;  // log P, differentiable through every iteration
  Matrix plan;       // P
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;  // max(|P 1 - a|, |P^T 1 - b|)
};

/// Log-domain Sinkhorn scaling of exp(logits) to marginals (a, b). Rows or
/// columns with zero mass are held at P = 0. Throws ValidationError when the
/// marginals are negative or do not balance.
SinkhornResult sinkhorn(ad::Var logits, const Vector& a, const Vector& b, const SinkhornConfig& config);
SinkhornResult sinkhorn(const Matrix& logits, const Vector& a, const Vector& b, const SinkhornConfig& config);

struct TransportSolution {
  ad::Var logits;
  SinkhornResult sinkhorn;
};

/// affinity followed by Sinkhorn with dustbin marginals. Inputs include the dustbin rows.
TransportSolution solve_matching(ad::Var fa, ad::Var fb, ad::Var weight, double delta,
                                 const SinkhornConfig& config);

/// Mutual arg-max over the full (n+1) x (m+1) plan; pairs in the detected block
/// with P_ij >= score_floor become matches, everything else is unmatched.
MatchSet extract_matches(const Matrix& plan, double score_floor);

}  // namespace linematch
