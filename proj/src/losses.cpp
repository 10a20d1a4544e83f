#include "linematch/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace linematch {

void LossConfig::validate() const {
  if (!(s3 > 0.0) || !(s5 > 0.0)) throw ValidationError("loss scales must be positive");
  auto margin_ok = [](double m) { return m >= 0.0 && m < std::numbers::pi / 2; };
  if (!margin_ok(eta3) || !margin_ok(eta5)) throw ValidationError("loss margins must lie in [0, pi/2)");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ValidationError("lambda must lie in [0, 1]");
}

namespace {

void require_unit_rows(const Matrix& f, const char* name) {
  for (Eigen::Index i = 0; i < f.rows(); ++i)
    if (std::abs(f.row(i).norm() - 1.0) > 1e-6)
      throw ValidationError(std::string("angular_margin_loss: row ") + std::to_string(i) + " of " + name +
                            " is not unit-norm");
}

struct MarginTerms {
  double loss = 0.0;
  Matrix grad;  // d loss / d cosine, same shape as the cosine matrix
};

MarginTerms margin_loss_from_cosines(const Matrix& cosines, std::span<const std::pair<int, int>> pairs,
                                     double s, double eta) {
  MarginTerms out;
  out.grad = Matrix::Zero(cosines.rows(), cosines.cols());
  if (pairs.empty()) return out;
  const double inv = 1.0 / static_cast<double>(pairs.size());
  const Eigen::Index m = cosines.cols();
  std::vector<double> logits(static_cast<std::size_t>(m));
  for (const auto& [i, j] : pairs) {
    if (i < 0 || i >= cosines.rows() || j < 0 || j >= m)
      throw ValidationError("angular_margin_loss: pair index out of range");
    const double raw = cosines(i, j);
    const double c = std::clamp(raw, -1.0 + kCosineClamp, 1.0 - kCosineClamp);
    const double theta = std::acos(c);
    for (Eigen::Index k = 0; k < m; ++k) logits[k] = s * cosines(i, k);
    logits[j] = s * std::cos(theta + eta);
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) z += std::exp(l - mx);
    const double lse = mx + std::log(z);
    out.loss += (lse - logits[j]) * inv;
    for (Eigen::Index k = 0; k < m; ++k) {
      const double p = std::exp(logits[k] - lse);
      if (k == j) {
        // d/dc s cos(acos(c) + eta) = s sin(theta + eta) / sin(theta), zero where clamped.
        const bool clamped = raw != c;
        const double dpos = clamped ? 0.0 : s * std::sin(theta + eta) / std::sin(theta);
        out.grad(i, k) += (p - 1.0) * dpos * inv;
      } else {
        out.grad(i, k) += p * s * inv;
      }
    }
  }
  return out;
}

}  // namespace

ad::Var angular_margin_loss(ad::Var fa, ad::Var fb, std::span<const std::pair<int, int>> pairs, double scale,
                            double margin, Diagnostics* diag) {
  if (fa.cols() != fb.cols()) throw DimensionError("angular_margin_loss: descriptor widths differ");
  require_unit_rows(fa.value(), "A");
  require_unit_rows(fb.value(), "B");
  ad::Tape* tape = fa.tape();
  if (pairs.empty()) {
    warn(diag, "angular_margin_loss: no matched pairs, loss set to 0");
    return tape->constant(Matrix::Zero(1, 1));
  }
  ad::Var cosines = ad::matmul(fa, ad::transpose(fb));
  MarginTerms terms = margin_loss_from_cosines(cosines.value(), pairs, scale, margin);
  Matrix out(1, 1);
  out(0, 0) = terms.loss;
  const int ic = cosines.id();
  return tape->push(std::move(out), {cosines}, [ic, grad = std::move(terms.grad)](ad::Tape& t, const Matrix& g) {
    t.accumulate(ic, grad * g(0, 0));
  });
}

double angular_margin_loss(const Matrix& fa, const Matrix& fb, std::span<const std::pair<int, int>> pairs,
                           double scale, double margin, Diagnostics* diag) {
  ad::Tape tape;
  return angular_margin_loss(tape.constant(fa), tape.constant(fb), pairs, scale, margin, diag).scalar();
}

ad::Var feature_learning_loss(ad::Var fa3, ad::Var fb3, ad::Var fa5, ad::Var fb5,
                              std::span<const std::pair<int, int>> pairs, const LossConfig& config,
                              Diagnostics* diag) {
  config.validate();
  std::vector<std::pair<int, int>> swapped;
  swapped.reserve(pairs.size());
  for (const auto& [i, j] : pairs) swapped.emplace_back(j, i);
  ad::Var l3ab = angular_margin_loss(fa3, fb3, pairs, config.s3, config.eta3, diag);
  ad::Var l3ba = angular_margin_loss(fb3, fa3, swapped, config.s3, config.eta3, diag);
  ad::Var l5ab = angular_margin_loss(fa5, fb5, pairs, config.s5, config.eta5, diag);
  ad::Var l5ba = angular_margin_loss(fb5, fa5, swapped, config.s5, config.eta5, diag);
  return (l3ab + l3ba) + (l5ab + l5ba);
}

namespace {

std::vector<std::pair<int, int>> loss_targets(const MatchGroundTruth& gt, Eigen::Index rows, Eigen::Index cols) {
  const int n = static_cast<int>(rows) - 1, m = static_cast<int>(cols) - 1;
  if (n < 0 || m < 0) throw DimensionError("matching_loss: assignment must have a dustbin row and column");
  std::vector<std::pair<int, int>> targets;
  targets.reserve(gt.pairs.size() + gt.unmatched_a.size() + gt.unmatched_b.size());
  auto check = [&](int i, int j) {
    if (i < 0 || i > n || j < 0 || j > m) throw ValidationError("matching_loss: index outside the assignment");
  };
  for (const auto& [i, j] : gt.pairs) {
    if (i >= n || j >= m) throw ValidationError("matching_loss: matched pair indexes a dustbin");
    check(i, j);
    targets.emplace_back(i, j);
  }
  for (int i : gt.unmatched_a) {
    check(i, m);
    targets.emplace_back(i, m);
  }
  for (int j : gt.unmatched_b) {
    check(n, j);
    targets.emplace_back(n, j);
  }
  return targets;
}

}  // namespace

ad::Var matching_loss(ad::Var p, const MatchGroundTruth& gt, Diagnostics* diag) {
  const auto targets = loss_targets(gt, p.rows(), p.cols());
  ad::Tape* tape = p.tape();
  if (targets.empty()) return tape->constant(Matrix::Zero(1, 1));
  ad::Var picked = ad::pick(p, targets);
  const Matrix& v = picked.value();
  Matrix floor_mask = (v.array() >= kProbabilityFloor).cast<double>();
  if ((floor_mask.array() == 0.0).any())
    warn(diag, "matching_loss: assignment entry below " + std::to_string(kProbabilityFloor) + " clamped");
  // max(v, floor) written as v * mask + floor * (1 - mask).
  Matrix offset = (1.0 - floor_mask.array()) * kProbabilityFloor;
  ad::Var clamped = ad::add(ad::mask(picked, floor_mask), tape->constant(std::move(offset)));
  return ad::scale(ad::sum(ad::log(clamped)), -1.0);
}

double matching_loss(const Matrix& p, const MatchGroundTruth& gt, Diagnostics* diag) {
  ad::Tape tape;
  return matching_loss(tape.constant(p), gt, diag).scalar();
}

ad::Var matching_loss_from_log(ad::Var log_p, const MatchGroundTruth& gt) {
  const auto targets = loss_targets(gt, log_p.rows(), log_p.cols());
  if (targets.empty()) return log_p.tape()->constant(Matrix::Zero(1, 1));
  return ad::scale(ad::sum(ad::pick(log_p, targets)), -1.0);
}

ad::Var total_loss(ad::Var feature, ad::Var graph, double lambda) {
  if (!std::isfinite(feature.scalar()) || !std::isfinite(graph.scalar()))
    throw NumericError("total_loss: non-finite component");
  return ad::scale(feature, lambda) + ad::scale(graph, 1.0 - lambda);
}

double total_loss(double feature, double graph, double lambda) {
  if (!std::isfinite(feature) || !std::isfinite(graph)) throw NumericError("total_loss: non-finite component");
  return lambda * feature + (1.0 - lambda) * graph;
}

}  // namespace linematch
