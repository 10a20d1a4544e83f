#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "linematch/autodiff.hpp"
#include "linematch/backbone.hpp"
#include "linematch/types.hpp"

namespace linematch {

/// GLpool hyperparameters. `width` is the odd number of samples across the
/// line (n), `groups` the number of max-pooled sub-vectors along it (w).
/// sigma <= 0 selects the default width/4.
struct GLPoolConfig {
  int width = 7;
  int groups = 5;
  double sigma = 0.0;
  /// Replace the support region by isolated points on the line, max-pooled
  /// over the whole segment (the ablation baseline).
  bool point_sampling = false;

  double effective_sigma() const { return sigma > 0.0 ? sigma : width / 4.0; }
  void validate() const;
};

/// Normalised Gaussian weights over `n` positions centred on (n-1)/2.
Vector gaussian_weights(int n, double sigma);

/// Number of samples along a segment of `length_px` pixels on a map of the given stride.
int samples_along(double length_px, int stride);

/// Raw (un-normalised) GLpool descriptor of one segment on a plain feature map.
Vector glpool(const FeatureMap& map, const LineSegment& segment, const GLPoolConfig& config);

/// Differentiable GLpool of all `segments` on one map; returns N x channels.
/// Errors carry the offending segment index.
ad::Var glpool(const FeatureMapVar& map, std::span<const LineSegment> segments,
               const GLPoolConfig& config);

/// Line descriptors f = normalize([normalize(f3) || normalize(f5)]).
/// `shallow`/`deep` keep the per-layer normalised parts used by the feature loss.
struct LineDescriptors {
  ad::Var shallow;
  ad::Var deep;
  ad::Var combined;
};

LineDescriptors describe_lines(const MultiScaleFeatureVars& maps, std::span<const LineSegment> segments,
                               const GLPoolConfig& config);

/// Plain-matrix variant; rows of the result are the combined descriptors.
Matrix describe_lines(const MultiScaleFeatureMaps& maps, std::span<const LineSegment> segments,
                      const GLPoolConfig& config);

/// Keeps line i of A iff max_j fa_i . fb_j >= threshold (symmetrically for B).
/// Indices are returned in ascending order.
std::pair<std::vector<int>, std::vector<int>> exclude_non_matches(const Matrix& fa, const Matrix& fb,
                                                                  double threshold);

/// Kept descriptors with the learnable dustbin row appended last.
struct DescriptorSet {
  Matrix descriptors;
  std::vector<int> kept_indices;
};

DescriptorSet append_dustbin(const Matrix& descriptors, std::vector<int> kept_indices,
                             const Matrix& dustbin);
ad::Var append_dustbin(ad::Var kept, ad::Var dustbin);

/// Random unit-variance direction, l2-normalised once (1 x dim).
Parameter init_dustbin(int dim, std::uint64_t seed);

}  // namespace linematch
