#pragma once

#include <filesystem>
#include <set>
#include <span>
#include <tuple>

#include <opencv2/core.hpp>

#include "linematch/eval.hpp"
#include "linematch/types.hpp"

namespace linematch {

// BGR stroke colours of the overlay.
inline const cv::Scalar kMatchedColour{255, 0, 0};     // blue
inline const cv::Scalar kUnmatchedColour{0, 255, 255}; // yellow
inline const cv::Scalar kCorrectColour{0, 255, 0};     // green
inline const cv::Scalar kIncorrectColour{0, 0, 255};   // red

using Colour = std::tuple<int, int, int>;

struct Overlay {
  cv::Mat image;             // A and B side by side
  std::set<Colour> colours;  // stroke colours actually drawn
};

/// Matched lines blue and unmatched yellow; with `gt`, matches are green when
/// correct and red otherwise. Anti-aliased 2 px strokes.
Overlay render_overlay(const cv::Mat& image_a, const cv::Mat& image_b, std::span<const LineSegment> lines_a,
                       std::span<const LineSegment> lines_b, const MatchSet& matches,
                       const MatchGroundTruth* gt = nullptr);

/// Precision and recall against the sweep axis as a PNG line chart.
cv::Mat plot_sweep(const SweepResult& sweep);

}  // namespace linematch
