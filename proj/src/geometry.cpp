#include "linematch/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <string>

#include <Eigen/Dense>

#include "linematch/errors.hpp"

namespace linematch {

void LineSegment::validate(int width, int height) const {
  if (!p0.allFinite() || !p1.allFinite()) throw ValidationError("line segment has non-finite endpoints");
  if (length() < kMinLength)
    throw ValidationError("line segment shorter than " + std::to_string(kMinLength) + " px");
  auto inside = [&](const Eigen::Vector2d& p) {
    return p.x() >= 0.0 && p.y() >= 0.0 && p.x() <= width - 1.0 && p.y() <= height - 1.0;
  };
  if (!inside(p0) || !inside(p1)) throw ValidationError("line segment endpoint outside the image");
}

void MatchGroundTruth::validate(int n, int m) const {
  std::vector<int> seen_a(n, 0), seen_b(m, 0);
  auto mark = [](std::vector<int>& seen, int idx, const char* side) {
    if (idx < 0 || idx >= static_cast<int>(seen.size()))
      throw ValidationError(std::string("ground truth index out of range in ") + side);
    if (seen[idx]++) throw ValidationError(std::string("ground truth index repeated in ") + side);
  };
  for (const auto& [i, j] : pairs) {
    mark(seen_a, i, "A");
    mark(seen_b, j, "B");
  }
  for (int i : unmatched_a) mark(seen_a, i, "A");
  for (int j : unmatched_b) mark(seen_b, j, "B");
  if (std::count(seen_a.begin(), seen_a.end(), 0) || std::count(seen_b.begin(), seen_b.end(), 0))
    throw ValidationError("ground truth does not cover every line");
}

MatchGroundTruth MatchGroundTruth::from_pairs(std::vector<std::pair<int, int>> pairs, int n, int m) {
  MatchGroundTruth gt;
  std::vector<char> in_a(n, 0), in_b(m, 0);
  for (const auto& [i, j] : pairs) {
    if (i < 0 || i >= n || j < 0 || j >= m) throw ValidationError("pair index out of range");
    in_a[i] = 1;
    in_b[j] = 1;
  }
  std::sort(pairs.begin(), pairs.end());
  gt.pairs = std::move(pairs);
  for (int i = 0; i < n; ++i)
    if (!in_a[i]) gt.unmatched_a.push_back(i);
  for (int j = 0; j < m; ++j)
    if (!in_b[j]) gt.unmatched_b.push_back(j);
  return gt;
}

Eigen::Vector2d apply_homography(const Homography& h, const Eigen::Vector2d& p) {
  const Eigen::Vector3d q = h * p.homogeneous();
  return q.hnormalized();
}

LineSegment apply_homography(const Homography& h, const LineSegment& s) {
  return {apply_homography(h, s.p0), apply_homography(h, s.p1)};
}

std::optional<LineSegment> clip_segment(const LineSegment& s, int width, int height) {
  const double xmin = 0.0, ymin = 0.0, xmax = width - 1.0, ymax = height - 1.0;
  const Eigen::Vector2d d = s.p1 - s.p0;
  double t0 = 0.0, t1 = 1.0;
  const double p[4] = {-d.x(), d.x(), -d.y(), d.y()};
  const double q[4] = {s.p0.x() - xmin, xmax - s.p0.x(), s.p0.y() - ymin, ymax - s.p0.y()};
  for (int k = 0; k < 4; ++k) {
    if (p[k] == 0.0) {
      if (q[k] < 0.0) return std::nullopt;
      continue;
    }
    const double r = q[k] / p[k];
    if (p[k] < 0.0)
      t0 = std::max(t0, r);
    else
      t1 = std::min(t1, r);
    if (t0 > t1) return std::nullopt;
  }
  // Unclipped ends are kept as given so exact remaps stay exact.
  LineSegment out{t0 > 0.0 ? Eigen::Vector2d(s.p0 + t0 * d) : s.p0, t1 < 1.0 ? Eigen::Vector2d(s.p0 + t1 * d) : s.p1};
  // Guard against round-off pushing endpoints a hair outside the box.
  for (auto* pt : {&out.p0, &out.p1}) {
    pt->x() = std::clamp(pt->x(), xmin, xmax);
    pt->y() = std::clamp(pt->y(), ymin, ymax);
  }
  return out;
}

double line_angle_deg(const LineSegment& a, const LineSegment& b) {
  const Eigen::Vector2d da = (a.p1 - a.p0).normalized(), db = (b.p1 - b.p0).normalized();
  const double c = std::clamp(std::abs(da.dot(db)), 0.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

double project_on(const LineSegment& s, const Eigen::Vector2d& p) {
  const Eigen::Vector2d d = (s.p1 - s.p0).normalized();
  return d.dot(p - s.p0);
}

double line_distance(const LineSegment& s, const Eigen::Vector2d& p) {
  const Eigen::Vector2d d = (s.p1 - s.p0).normalized();
  const Eigen::Vector2d r = p - s.p0;
  return std::abs(d.x() * r.y() - d.y() * r.x());
}

double projected_overlap(const LineSegment& s, const LineSegment& t) {
  const double len = s.length();
  double a = project_on(s, t.p0), b = project_on(s, t.p1);
  if (a > b) std::swap(a, b);
  return std::max(0.0, std::min(len, b) - std::max(0.0, a));
}

LineSegment fit_segment(const std::vector<Eigen::Vector2d>& points) {
  if (points.size() < 2) throw ValidationError("fit_segment needs at least two points");
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& p : points) mean += p;
  mean /= static_cast<double>(points.size());
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& p : points) cov += (p - mean) * (p - mean).transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(cov);
  const Eigen::Vector2d dir = eig.eigenvectors().col(1);
  double lo = 0.0, hi = 0.0;
  bool first = true;
  for (const auto& p : points) {
    const double t = dir.dot(p - mean);
    if (first) {
      lo = hi = t;
      first = false;
    }
    lo = std::min(lo, t);
    hi = std::max(hi, t);
  }
  // Keep the orientation of the input ordering.
  LineSegment out{mean + lo * dir, mean + hi * dir};
  if ((out.p1 - out.p0).dot(points.back() - points.front()) < 0) out = out.reversed();
  return out;
}

Homography similarity_about(double cx, double cy, double deg, double scale) {
  const double r = deg * std::numbers::pi / 180.0;
  const double c = std::cos(r) * scale, s = std::sin(r) * scale;
  Homography h;
  h << c, -s, cx - c * cx + s * cy,  //
      s, c, cy - s * cx - c * cy,    //
      0, 0, 1;
  return h;
}

}  // namespace linematch
