#include <algorithm>
#include <cmath>
#include <tuple>

#include <Eigen/Dense>

#include "linematch/datagen.hpp"
#include "linematch/errors.hpp"

namespace linematch {

void CameraModel::validate() const {
  if (!(intrinsics(0, 0) > 0.0 && intrinsics(1, 1) > 0.0)) throw ValidationError("camera: focal lengths must be positive");
  if (intrinsics(1, 0) != 0.0 || intrinsics(2, 0) != 0.0 || intrinsics(2, 1) != 0.0 || intrinsics(2, 2) != 1.0)
    throw ValidationError("camera: intrinsics must be upper triangular with K(2,2) = 1");
  if (!(rotation.transpose() * rotation).isIdentity(1e-9) || rotation.determinant() < 0.0)
    throw ValidationError("camera: rotation is not orthonormal");
  if (!depth.allFinite()) throw ValidationError("camera: non-finite depth");
}

Eigen::Vector3d CameraModel::back_project(const Eigen::Vector2d& pixel, double z) const {
  const Eigen::Vector3d cam = z * intrinsics.inverse() * pixel.homogeneous();
  return rotation.transpose() * (cam - translation);
}

std::optional<Eigen::Vector2d> CameraModel::project(const Eigen::Vector3d& world) const {
  const Eigen::Vector3d cam = rotation * world + translation;
  if (cam.z() <= 0.0) return std::nullopt;
  return (intrinsics * cam).hnormalized();
}

namespace {

// Nearest-pixel depth lookup; 0 when outside the map or invalid.
double depth_at(const CameraModel& cam, const Eigen::Vector2d& p) {
  const long x = std::lround(p.x()), y = std::lround(p.y());
  if (x < 0 || y < 0 || y >= cam.depth.rows() || x >= cam.depth.cols()) return 0.0;
  const double d = cam.depth(y, x);
  return d > 0.0 ? d : 0.0;
}

}  // namespace

LabelResult label_matches_from_depth(const std::vector<LineSegment>& lines_a, const std::vector<LineSegment>& lines_b,
                                     const CameraModel& cam_a, const CameraModel& cam_b, const LabelerConfig& config) {
  cam_a.validate();
  cam_b.validate();
  if (config.samples < 2) throw ValidationError("labeler: need at least two samples per line");
  LabelResult res;
  res.projected.resize(lines_a.size());

  for (std::size_t i = 0; i < lines_a.size(); ++i) {
    const LineSegment& la = lines_a[i];
    std::vector<Eigen::Vector2d> pts;
    for (int k = 0; k < config.samples; ++k) {
      const double t = static_cast<double>(k) / (config.samples - 1);
      const Eigen::Vector2d p = la.p0 + t * (la.p1 - la.p0);
      const double z = depth_at(cam_a, p);
      if (z <= 0.0) continue;
      const Eigen::Vector3d world = cam_a.back_project(p, z);
      const auto q = cam_b.project(world);
      if (!q) continue;
      // Occluded in B when B sees something closer at that pixel.
      if (cam_b.depth.size() > 0) {
        const double zb = depth_at(cam_b, *q);
        const double z_in_b = (cam_b.rotation * world + cam_b.translation).z();
        if (zb > 0.0 && z_in_b > zb * 1.05) continue;
      }
      pts.push_back(*q);
    }
    if (pts.size() < 2) {
      ++res.lines_without_depth;
      continue;
    }
    res.projected[i] = fit_segment(pts);
  }

  std::vector<std::tuple<double, int, int>> candidates;
  for (std::size_t i = 0; i < lines_a.size(); ++i) {
    if (!res.projected[i]) continue;
    const LineSegment& pa = *res.projected[i];
    const double len_a = pa.length();
    if (len_a <= 0.0) continue;
    for (std::size_t j = 0; j < lines_b.size(); ++j) {
      const LineSegment& lb = lines_b[j];
      if (line_angle_deg(pa, lb) >= config.angle_thresh_deg) continue;
      const double dist = 0.5 * (line_distance(pa, lb.p0) + line_distance(pa, lb.p1));
      if (dist >= config.distance_thresh_px) continue;
      const double ov = projected_overlap(pa, lb);
      const double ratio = std::min(ov / len_a, ov / lb.length());
      if (ratio > config.overlap_thresh)
        candidates.emplace_back(ratio, static_cast<int>(i), static_cast<int>(j));
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const auto& x, const auto& y) {
    if (std::get<0>(x) != std::get<0>(y)) return std::get<0>(x) > std::get<0>(y);
    if (std::get<1>(x) != std::get<1>(y)) return std::get<1>(x) < std::get<1>(y);
    return std::get<2>(x) < std::get<2>(y);
  });
  std::vector<char> used_a(lines_a.size(), 0), used_b(lines_b.size(), 0);
  std::vector<std::pair<int, int>> pairs;
  for (const auto& [ratio, i, j] : candidates) {
    if (used_a[i] || used_b[j]) continue;
    used_a[i] = used_b[j] = 1;
    pairs.emplace_back(i, j);
  }
  res.gt = MatchGroundTruth::from_pairs(std::move(pairs), static_cast<int>(lines_a.size()),
                                        static_cast<int>(lines_b.size()));
  return res;
}

}  // namespace linematch
