#pragma once

// Independent reference implementations used as test oracles. They share no
// code with the library beyond plain data types.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "linematch/types.hpp"

namespace lmtest {

using linematch::Matrix;

/// Normalised Gaussian evaluated from the closed form at d = -(n-1)/2 .. (n-1)/2.
inline std::vector<double> gaussian_oracle(int n, double sigma) {
  std::vector<double> g;
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = i - (n - 1) / 2.0;
    const double v = std::exp(-d * d / (2.0 * sigma * sigma)) / (std::sqrt(2.0 * M_PI) * sigma);
    g.push_back(v);
    total += v;
  }
  for (double& v : g) v /= total;
  return g;
}

/// Brute-force support-region pooling on a single-channel stride-1 map (rows = y)
/// for an axis-aligned segment whose endpoints sit half a pixel off the grid, so
/// every sample lands on a pixel centre and no interpolation is needed.
inline double glpool_rect_oracle(const Matrix& map, const linematch::LineSegment& s, int n, int w, double sigma) {
  const bool horizontal = s.p0.y() == s.p1.y();
  const double len = (s.p1 - s.p0).norm();
  const int m = std::max(1, static_cast<int>(std::lround(len)));
  const double dir = horizontal ? (s.p1.x() > s.p0.x() ? 1.0 : -1.0) : (s.p1.y() > s.p0.y() ? 1.0 : -1.0);
  const auto g = gaussian_oracle(n, sigma);

  // Materialise the m x n rectangle of pixel values.
  std::vector<std::vector<double>> rect(m, std::vector<double>(n));
  for (int k = 0; k < m; ++k) {
    const double along = (horizontal ? s.p0.x() : s.p0.y()) + dir * (k + 0.5);
    for (int i = 0; i < n; ++i) {
      const int off = i - (n - 1) / 2;
      const int x = static_cast<int>(std::lround(horizontal ? along : s.p0.x() + off));
      const int y = static_cast<int>(std::lround(horizontal ? s.p0.y() + off : along));
      rect[k][i] = map(y, x);
    }
  }
  // Stage 1: Gaussian weighted average across the width.
  std::vector<double> col(m, 0.0);
  for (int k = 0; k < m; ++k)
    for (int i = 0; i < n; ++i) col[k] += g[i] * rect[k][i];
  // Stage 2: max inside each of w contiguous groups (first m % w groups one longer).
  std::vector<double> maxima;
  int start = 0;
  for (int q = 0; q < w; ++q) {
    const int size = m / w + (q < m % w ? 1 : 0);
    if (size == 0) continue;
    double best = -std::numeric_limits<double>::infinity();
    for (int k = start; k < start + size; ++k) best = std::max(best, col[k]);
    maxima.push_back(best);
    start += size;
  }
  // Stage 3: mean of the group maxima.
  return std::accumulate(maxima.begin(), maxima.end(), 0.0) / static_cast<double>(maxima.size());
}

/// Maximum-weight permutation by enumeration; returns the permutation and the
/// gap to the runner-up total.
inline std::pair<std::vector<int>, double> best_assignment(const Matrix& score) {
  const int n = static_cast<int>(score.rows());
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = -std::numeric_limits<double>::infinity(), second = best;
  std::vector<int> arg;
  do {
    double t = 0.0;
    for (int i = 0; i < n; ++i) t += score(i, perm[i]);
    if (t > best) {
      second = best;
      best = t;
      arg = perm;
    } else if (t > second) {
      second = t;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return {arg, best - second};
}

/// Every (i, j) in the detected block that is the maximum of its row and of its
/// column over the whole plan and reaches `floor`.
inline std::vector<std::pair<int, int>> mutual_argmax_oracle(const Matrix& p, double floor) {
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i + 1 < p.rows(); ++i)
    for (int j = 0; j + 1 < p.cols(); ++j) {
      bool row_max = true, col_max = true;
      for (int c = 0; c < p.cols(); ++c)
        if (p(i, c) > p(i, j)) row_max = false;
      for (int r = 0; r < p.rows(); ++r)
        if (p(r, j) > p(i, j)) col_max = false;
      if (row_max && col_max && p(i, j) >= floor) out.emplace_back(i, j);
    }
  return out;
}

/// Scalar angular margin loss, one term per pair.
inline double angular_margin_oracle(const Matrix& fa, const Matrix& fb, const std::vector<std::pair<int, int>>& pairs,
                                    double s, double eta) {
  if (pairs.empty()) return 0.0;
  double total = 0.0;
  for (const auto& [i, j] : pairs) {
    double c = 0.0;
    for (int d = 0; d < fa.cols(); ++d) c += fa(i, d) * fb(j, d);
    c = std::clamp(c, -1.0 + 1e-7, 1.0 - 1e-7);
    const double pos = std::exp(s * std::cos(std::acos(c) + eta));
    double den = pos;
    for (int k = 0; k < fb.rows(); ++k) {
      if (k == j) continue;
      double ck = 0.0;
      for (int d = 0; d < fa.cols(); ++d) ck += fa(i, d) * fb(k, d);
      den += std::exp(s * ck);
    }
    total += -std::log(pos / den);
  }
  return total / static_cast<double>(pairs.size());
}

inline double matching_loss_oracle(const Matrix& p, const linematch::MatchGroundTruth& gt) {
  const int n = static_cast<int>(p.rows()) - 1, m = static_cast<int>(p.cols()) - 1;
  double l = 0.0;
  for (const auto& [i, j] : gt.pairs) l -= std::log(p(i, j));
  for (int i : gt.unmatched_a) l -= std::log(p(i, m));
  for (int j : gt.unmatched_b) l -= std::log(p(n, j));
  return l;
}

/// Top-1 mutual adjacency by enumeration over the detected nodes.
inline Matrix top1_adjacency_oracle(const Matrix& scores, int n) {
  std::vector<int> pick(n);
  for (int i = 0; i < n; ++i) {
    int best = 0;
    for (int j = 1; j < n; ++j)
      if (scores(i, j) > scores(i, best)) best = j;
    pick[i] = best;
  }
  Matrix as = Matrix::Zero(n + 1, n + 1);
  for (int i = 0; i < n; ++i)
    if (pick[pick[i]] == i) as(i, pick[i]) = scores(i, pick[i]);
  Matrix a = Matrix::Zero(n + 1, n + 1);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double dot = 0.0;
      for (int k = 0; k <= n; ++k) dot += as(i, k) * as(j, k);
      a(i, j) = std::tanh(dot);
    }
  return a;
}

}  // namespace lmtest
