#include "linematch/image.hpp"

#include <algorithm>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "linematch/errors.hpp"

namespace linematch {

void ImageTensor::validate() const {
  if (channels != 1 && channels != 3)
    throw DimensionError("image must have 1 or 3 channels, got " + std::to_string(channels));
  if (height < kMinSide || width < kMinSide)
    throw DimensionError("image " + std::to_string(width) + "x" + std::to_string(height) +
                         " is smaller than the minimum " + std::to_string(kMinSide) + "x" +
                         std::to_string(kMinSide));
  if (values.rows() != channels || values.cols() != static_cast<Eigen::Index>(height) * width)
    throw DimensionError("image value matrix does not match its declared shape");
  if (!values.allFinite()) throw ValidationError("image contains non-finite values");
}

ImageTensor to_tensor(const cv::Mat& image) {
  if (image.empty()) throw ValidationError("empty image");
  const int c = image.channels();
  if (c != 1 && c != 3) throw DimensionError("image must have 1 or 3 channels");
  cv::Mat f;
  const double scale = image.depth() == CV_8U ? 1.0 / 255.0 : 1.0;
  image.convertTo(f, CV_MAKETYPE(CV_64F, c), scale);
  ImageTensor t;
  t.height = image.rows;
  t.width = image.cols;
  t.channels = c;
  t.values.resize(c, static_cast<Eigen::Index>(t.height) * t.width);
  for (int y = 0; y < t.height; ++y) {
    const double* row = f.ptr<double>(y);
    for (int x = 0; x < t.width; ++x)
      for (int k = 0; k < c; ++k) t.values(k, static_cast<Eigen::Index>(y) * t.width + x) = row[x * c + k];
  }
  return t;
}

cv::Mat to_mat(const ImageTensor& t) {
  cv::Mat out(t.height, t.width, CV_MAKETYPE(CV_8U, t.channels));
  for (int y = 0; y < t.height; ++y) {
    auto* row = out.ptr<unsigned char>(y);
    for (int x = 0; x < t.width; ++x)
      for (int k = 0; k < t.channels; ++k)
        row[x * t.channels + k] = cv::saturate_cast<unsigned char>(std::clamp(t.at(k, y, x), 0.0, 1.0) * 255.0);
  }
  return out;
}

cv::Mat read_png(const std::filesystem::path& path) {
  cv::Mat img = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (img.empty()) throw IoError("cannot read image " + path.string());
  if (img.channels() == 4) cv::cvtColor(img, img, cv::COLOR_BGRA2BGR);
  return img;
}

void write_png(const std::filesystem::path& path, const cv::Mat& image) {
  if (!cv::imwrite(path.string(), image)) throw IoError("cannot write image " + path.string());
}

}  // namespace linematch
