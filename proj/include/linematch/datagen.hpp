#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>
#include <opencv2/core.hpp>

#include "linematch/geometry.hpp"
#include "linematch/types.hpp"

namespace linematch {

/// One training/evaluation sample. Images are 8-bit BGR; when loaded from a
/// manifest the paths are relative to the manifest directory.
struct ImagePairRecord {
  std::string id;
  std::string image_a_path;
  std::string image_b_path;
  cv::Mat image_a;
  cv::Mat image_b;
  std::vector<LineSegment> lines_a;
  std::vector<LineSegment> lines_b;
  MatchGroundTruth gt;
  nlohmann::json meta = nlohmann::json::object();

  void validate() const;
};

/// Parameters of the synthetic scene renderer and the random view warp.
struct SyntheticConfig {
  int image_size = 128;
  int grid = 4;                      // shapes per world row
  double world_scale = 1.5;          // world canvas side relative to the view
  double max_rotation_deg = 15.0;
  double min_scale = 0.85;
  double max_scale = 1.15;
  double max_translation = 20.0;     // pixels
  double max_perspective = 3e-4;
  double min_line_length = 12.0;     // pixels, in both views
  double ratio_min = 0.5;            // sampled match / non-match target
  double ratio_max = 1.5;
  /// When >= 0, lines are dropped independently with these probabilities
  /// instead of targeting a match ratio.
  double drop_prob_a = -1.0;
  double drop_prob_b = -1.0;
  double fragment_prob = 0.2;
  double noise_sigma = 0.01;
  bool identity = false;             // view B = view A, no warp
  bool shuffle = true;
};

/// Renders a random polygon scene, warps it into two views and derives the
/// exact ground truth. Deterministic in `seed`.
ImagePairRecord generate_synthetic_pair(std::uint64_t seed, const SyntheticConfig& config);

/// Same warp and labelling applied to a caller-supplied base image whose
/// segments are given in its own pixel frame (the base image plays the world).
ImagePairRecord generate_warped_pair(const cv::Mat& base_image, const std::vector<LineSegment>& base_lines,
                                     std::uint64_t seed, const SyntheticConfig& config);

/// Warps view A by `ha` and view B by `hb` into images of the given sizes,
/// clips the lines to the new frames, drops lines shorter than `min_length`
/// and rewires the ground truth (a dropped line's partner becomes unmatched).
ImagePairRecord warp_record(const ImagePairRecord& record, const Homography& ha, const Homography& hb,
                            cv::Size size_a, cv::Size size_b, double min_length = LineSegment::kMinLength);

struct FilterConfig {
  int min_matches = 5;
  double max_overlap = 0.9;
  double ratio_min = 0.5;
  double ratio_max = 1.5;
};

struct FilterDecision {
  bool keep = true;
  std::string reason;
};

/// Matches over non-matches (|A unmatched| + |B unmatched|); +inf when there are no non-matches.
double match_ratio(const MatchGroundTruth& gt);

/// Discards pairs with too few matches, too much view overlap (meta "view_overlap")
/// or a match ratio outside the bounds.
FilterDecision filter_pairs(const ImagePairRecord& record, const FilterConfig& config);

struct GenerationSummary {
  int attempted = 0;
  int kept = 0;
  int discarded = 0;
};

/// Draws candidates from `master_seed` until `count` pass the filter (at most
/// 20 * count + 20 attempts). Record ids are zero-padded kept indices.
std::vector<ImagePairRecord> generate_dataset(int count, std::uint64_t master_seed, const SyntheticConfig& config,
                                              const FilterConfig& filter, GenerationSummary* summary = nullptr);

// ---------------------------------------------------------------------------
// Ground truth from depth and pose.

struct CameraModel {
  Eigen::Matrix3d intrinsics = Eigen::Matrix3d::Identity();
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();  // world -> camera
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  Eigen::MatrixXd depth;  // rows = image height; <= 0 marks invalid depth

  void validate() const;
  Eigen::Vector3d back_project(const Eigen::Vector2d& pixel, double depth) const;  // to world
  std::optional<Eigen::Vector2d> project(const Eigen::Vector3d& world) const;
};

struct LabelerConfig {
  double angle_thresh_deg = 5.0;
  double overlap_thresh = 0.5;
  double distance_thresh_px = 3.0;
  int samples = 16;
};

struct LabelResult {
  MatchGroundTruth gt;
  int lines_without_depth = 0;
  std::vector<std::optional<LineSegment>> projected;  // l'_a for each line of A
};

LabelResult label_matches_from_depth(const std::vector<LineSegment>& lines_a, const std::vector<LineSegment>& lines_b,
                                     const CameraModel& cam_a, const CameraModel& cam_b, const LabelerConfig& config);

// ---------------------------------------------------------------------------
// Dataset manifest (JSON lines).

nlohmann::json record_to_json(const ImagePairRecord& record);
/// `line` is used in error messages only.
ImagePairRecord record_from_json(const nlohmann::json& j, std::size_t line);

/// Writes images that are held in memory next to the manifest (images/<id>_{a,b}.png)
/// and one JSON object per line.
void write_manifest(const std::vector<ImagePairRecord>& records, const std::filesystem::path& path);

/// Reads the whole manifest. With `load_images`, PNGs are decoded as well.
std::vector<ImagePairRecord> read_manifest(const std::filesystem::path& path, bool load_images = true);

/// Incremental reader over a manifest.
class ManifestReader {
 public:
  explicit ManifestReader(const std::filesystem::path& path, bool load_images = true);
  ~ManifestReader();
  ManifestReader(const ManifestReader&) = delete;
  ManifestReader& operator=(const ManifestReader&) = delete;

  /// Returns false at end of file.
  bool next(ImagePairRecord& record);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace linematch
