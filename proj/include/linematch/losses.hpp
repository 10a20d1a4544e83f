#pragma once

#include <span>
#include <utility>

#include "linematch/autodiff.hpp"
#include "linematch/errors.hpp"
#include "linematch/types.hpp"

namespace linematch {

struct LossConfig {
  double s3 = 30.0;
  double s5 = 5.0;
  double eta3 = 0.5;
  double eta5 = 0.2;
  double lambda = 0.5;

  void validate() const;
};

/// Clamp applied to cosines before arccos.
inline constexpr double kCosineClamp = 1e-7;
/// Floor applied to probabilities before the logarithm.
inline constexpr double kProbabilityFloor = 1e-12;

/// Additive angular margin softmax loss of set A against set B, averaged over
/// `pairs`. The denominator runs over every line of B (no dustbin).
/// Rows of both inputs must be unit-norm. Returns 0 (and warns) when `pairs`
/// is empty.
ad::Var angular_margin_loss(ad::Var fa, ad::Var fb, std::span<const std::pair<int, int>> pairs,
                            double scale, double margin, Diagnostics* diag = nullptr);

double angular_margin_loss(const Matrix& fa, const Matrix& fb, std::span<const std::pair<int, int>> pairs,
                           double scale, double margin, Diagnostics* diag = nullptr);

/// Sum over both layers and both directions of the angular margin loss.
ad::Var feature_learning_loss(ad::Var fa3, ad::Var fb3, ad::Var fa5, ad::Var fb5,
                              std::span<const std::pair<int, int>> pairs, const LossConfig& config,
                              Diagnostics* diag = nullptr);

/// Negative log-likelihood of the ground truth under the (n+1) x (m+1)
/// assignment P; the dustbin row/column are the last ones. Entries below
/// kProbabilityFloor are clamped (with a warning).
ad::Var matching_loss(ad::Var p, const MatchGroundTruth& gt, Diagnostics* diag = nullptr);
double matching_loss(const Matrix& p, const MatchGroundTruth& gt, Diagnostics* diag = nullptr);

/// Same objective evaluated directly on log P (no clamping needed).
ad::Var matching_loss_from_log(ad::Var log_p, const MatchGroundTruth& gt);

/// lambda * feature + (1 - lambda) * graph.
ad::Var total_loss(ad::Var feature, ad::Var graph, double lambda);
double total_loss(double feature, double graph, double lambda);

}  // namespace linematch
