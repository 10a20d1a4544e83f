#pragma once

#include <utility>
#include <vector>

#include <Eigen/Core>

namespace linematch {

/// A detected line segment, endpoints in pixel coordinates (pixel centres at integers).
struct LineSegment {
  Eigen::Vector2d p0 = Eigen::Vector2d::Zero();
  Eigen::Vector2d p1 = Eigen::Vector2d::Zero();

  LineSegment() = default;
  LineSegment(double x0, double y0, double x1, double y1) : p0(x0, y0), p1(x1, y1) {}
  LineSegment(Eigen::Vector2d a, Eigen::Vector2d b) : p0(std::move(a)), p1(std::move(b)) {}

  double length() const { return (p1 - p0).norm(); }
  Eigen::Vector2d midpoint() const { return 0.5 * (p0 + p1); }
  LineSegment reversed() const { return {p1, p0}; }

  static constexpr double kMinLength = 4.0;
  /// Throws ValidationError unless length >= kMinLength and both endpoints lie
  /// in [0, width-1] x [0, height-1].
  void validate(int width, int height) const;

  bool operator==(const LineSegment&) const = default;
};

/// Ground-truth correspondences between the line lists of image A and B.
/// Indices are 0-based positions in the respective lists.
struct MatchGroundTruth {
  std::vector<std::pair<int, int>> pairs;
  std::vector<int> unmatched_a;
  std::vector<int> unmatched_b;

  /// Checks injectivity, index bounds and that every line of A (size n) and
  /// of B (size m) appears exactly once across pairs and unmatched sets.
  void validate(int n, int m) const;
  /// Builds the unmatched sets as the complement of `pairs`.
  static MatchGroundTruth from_pairs(std::vector<std::pair<int, int>> pairs, int n, int m);

  bool operator==(const MatchGroundTruth&) const = default;
};

struct Match {
  int a = 0;
  int b = 0;
  double score = 0.0;
  bool operator==(const Match&) const = default;
};

/// Hard decisions extracted from a soft assignment.
struct MatchSet {
  std::vector<Match> matches;
  std::vector<int> unmatched_a;
  std::vector<int> unmatched_b;
};

}  // namespace linematch
