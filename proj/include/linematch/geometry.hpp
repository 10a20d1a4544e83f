#pragma once

#include <optional>
#include <vector>

#include <Eigen/Core>

#include "linematch/types.hpp"

namespace linematch {

using Homography = Eigen::Matrix3d;

Eigen::Vector2d apply_homography(const Homography& h, const Eigen::Vector2d& p);
LineSegment apply_homography(const Homography& h, const LineSegment& s);

/// Clips a segment to the axis-aligned box [0, width-1] x [0, height-1]
/// (Liang-Barsky). Returns nothing when the segment lies entirely outside.
std::optional<LineSegment> clip_segment(const LineSegment& s, int width, int height);

/// Acute angle between the supporting lines, in degrees [0, 90].
double line_angle_deg(const LineSegment& a, const LineSegment& b);

/// Signed position of `p` along the direction of `s`, with s.p0 at 0.
double project_on(const LineSegment& s, const Eigen::Vector2d& p);

/// Perpendicular distance from `p` to the infinite line through `s`.
double line_distance(const LineSegment& s, const Eigen::Vector2d& p);

/// Length of the overlap between `s` and the orthogonal projection of `t` onto it.
double projected_overlap(const LineSegment& s, const LineSegment& t);

/// Total-least-squares line through `points`, trimmed to their extent.
LineSegment fit_segment(const std::vector<Eigen::Vector2d>& points);

/// Rotation about (cx, cy) by `deg` degrees combined with isotropic scaling
/// about the same centre, as a homography.
Homography similarity_about(double cx, double cy, double deg, double scale);

}  // namespace linematch
