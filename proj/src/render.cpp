#include "linematch/render.hpp"

#include <cstdio>

#include <opencv2/imgproc.hpp>

namespace linematch {

namespace {

Colour key(const cv::Scalar& s) {
  return {static_cast<int>(s[0]), static_cast<int>(s[1]), static_cast<int>(s[2])};
}

void stroke(cv::Mat& canvas, const LineSegment& s, int dx, const cv::Scalar& colour) {
  constexpr int kShift = 4;
  constexpr double kSub = 1 << kShift;
  auto pt = [&](const Eigen::Vector2d& p) {
    return cv::Point(static_cast<int>(std::lround((p.x() + dx) * kSub)), static_cast<int>(std::lround(p.y() * kSub)));
  };
  cv::line(canvas, pt(s.p0), pt(s.p1), colour, 2, cv::LINE_AA, kShift);
}

}  // namespace

Overlay render_overlay(const cv::Mat& image_a, const cv::Mat& image_b, std::span<const LineSegment> lines_a,
                       std::span<const LineSegment> lines_b, const MatchSet& matches, const MatchGroundTruth* gt) {
  auto bgr = [](const cv::Mat& m) {
    cv::Mat out;
    if (m.channels() == 1)
      cv::cvtColor(m, out, cv::COLOR_GRAY2BGR);
    else
      out = m.clone();
    return out;
  };
  const cv::Mat a = bgr(image_a), b = bgr(image_b);
  Overlay ov;
  ov.image = cv::Mat(std::max(a.rows, b.rows), a.cols + b.cols, CV_8UC3, cv::Scalar(0, 0, 0));
  a.copyTo(ov.image(cv::Rect(0, 0, a.cols, a.rows)));
  b.copyTo(ov.image(cv::Rect(a.cols, 0, b.cols, b.rows)));

  std::set<std::pair<int, int>> truth;
  if (gt) truth.insert(gt->pairs.begin(), gt->pairs.end());
  std::vector<char> drawn_a(lines_a.size(), 0), drawn_b(lines_b.size(), 0);
  for (const Match& m : matches.matches) {
    cv::Scalar c = kMatchedColour;
    if (gt) c = truth.count({m.a, m.b}) ? kCorrectColour : kIncorrectColour;
    stroke(ov.image, lines_a[m.a], 0, c);
    stroke(ov.image, lines_b[m.b], a.cols, c);
    drawn_a[m.a] = drawn_b[m.b] = 1;
    ov.colours.insert(key(c));
  }
  for (std::size_t i = 0; i < lines_a.size(); ++i)
    if (!drawn_a[i]) {
      stroke(ov.image, lines_a[i], 0, kUnmatchedColour);
      ov.colours.insert(key(kUnmatchedColour));
    }
  for (std::size_t j = 0; j < lines_b.size(); ++j)
    if (!drawn_b[j]) {
      stroke(ov.image, lines_b[j], a.cols, kUnmatchedColour);
      ov.colours.insert(key(kUnmatchedColour));
    }
  return ov;
}

cv::Mat plot_sweep(const SweepResult& sweep) {
  const int w = 640, h = 400, left = 60, right = 20, top = 30, bottom = 50;
  cv::Mat img(h, w, CV_8UC3, cv::Scalar(255, 255, 255));
  const cv::Scalar black(0, 0, 0), grey(200, 200, 200);
  const double x0 = sweep.points.empty() ? 0.0 : sweep.points.front().value;
  double x1 = sweep.points.empty() ? 1.0 : sweep.points.back().value;
  if (x1 <= x0) x1 = x0 + 1.0;
  auto px = [&](double x) { return left + static_cast<int>((x - x0) / (x1 - x0) * (w - left - right)); };
  auto py = [&](double y) { return h - bottom - static_cast<int>(y / 100.0 * (h - top - bottom)); };

  for (int y = 0; y <= 100; y += 20) {
    cv::line(img, {left, py(y)}, {w - right, py(y)}, grey, 1);
    cv::putText(img, std::to_string(y), {10, py(y) + 5}, cv::FONT_HERSHEY_SIMPLEX, 0.4, black, 1, cv::LINE_AA);
  }
  for (const auto& p : sweep.points) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%g", p.value);
    cv::putText(img, buf, {px(p.value) - 10, h - bottom + 20}, cv::FONT_HERSHEY_SIMPLEX, 0.4, black, 1, cv::LINE_AA);
  }
  cv::rectangle(img, {left, top}, {w - right, h - bottom}, black, 1);
  cv::putText(img, axis_name(sweep.axis), {w / 2 - 30, h - 10}, cv::FONT_HERSHEY_SIMPLEX, 0.5, black, 1, cv::LINE_AA);

  const cv::Scalar pc(200, 80, 0), rc(0, 0, 200);
  cv::Point prev_p(-1, -1), prev_r(-1, -1);
  for (const auto& p : sweep.points) {
    if (!p.defined) {
      prev_p = prev_r = {-1, -1};
      continue;
    }
    const cv::Point cp(px(p.value), py(p.metrics.precision)), cr(px(p.value), py(p.metrics.recall));
    if (prev_p.x >= 0) {
      cv::line(img, prev_p, cp, pc, 2, cv::LINE_AA);
      cv::line(img, prev_r, cr, rc, 2, cv::LINE_AA);
    }
    cv::circle(img, cp, 3, pc, cv::FILLED, cv::LINE_AA);
    cv::circle(img, cr, 3, rc, cv::FILLED, cv::LINE_AA);
    prev_p = cp;
    prev_r = cr;
  }
  cv::putText(img, "precision", {left + 10, top + 18}, cv::FONT_HERSHEY_SIMPLEX, 0.45, pc, 1, cv::LINE_AA);
  cv::putText(img, "recall", {left + 100, top + 18}, cv::FONT_HERSHEY_SIMPLEX, 0.45, rc, 1, cv::LINE_AA);
  return img;
}

}  // namespace linematch
