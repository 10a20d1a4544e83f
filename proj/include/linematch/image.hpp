#pragma once

#include <filesystem>

#include <opencv2/core.hpp>

#include "linematch/autodiff.hpp"

namespace linematch {

/// Planar image, one row of `values` per channel, pixels in row-major order.
/// Values are expected in [0, 1].
struct ImageTensor {
  int height = 0;
  int width = 0;
  int channels = 0;
  Matrix values;

  static constexpr int kMinSide = 32;

  double at(int c, int y, int x) const { return values(c, static_cast<Eigen::Index>(y) * width + x); }
  /// Throws DimensionError / ValidationError when the invariants do not hold.
  void validate() const;
};

/// 8-bit or float OpenCV image (1 or 3 channels) to a planar tensor scaled to [0, 1].
ImageTensor to_tensor(const cv::Mat& image);
/// Planar tensor back to an 8-bit OpenCV image (values clamped to [0, 1]).
cv::Mat to_mat(const ImageTensor& tensor);

cv::Mat read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const cv::Mat& image);

}  // namespace linematch
