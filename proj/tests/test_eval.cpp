#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "linematch/datagen.hpp"
#include "linematch/errors.hpp"
#include "linematch/eval.hpp"
#include "linematch/render.hpp"

using namespace linematch;
namespace fs = std::filesystem;

namespace {

// Matches each A line to the B line with the nearest midpoint when it is
// within 6 px, otherwise leaves it unmatched. Depends only on the line lists.
MatchSet nearest_midpoint(const ImagePairRecord& r) {
  MatchSet out;
  std::vector<char> used(r.lines_b.size(), 0);
  for (std::size_t i = 0; i < r.lines_a.size(); ++i) {
    int best = -1;
    double bd = 6.0;
    for (std::size_t j = 0; j < r.lines_b.size(); ++j) {
      const double d = (r.lines_a[i].midpoint() - r.lines_b[j].midpoint()).norm();
      if (!used[j] && d < bd) {
        bd = d;
        best = static_cast<int>(j);
      }
    }
    if (best < 0) {
      out.unmatched_a.push_back(static_cast<int>(i));
      continue;
    }
    used[static_cast<std::size_t>(best)] = 1;
    out.matches.push_back({static_cast<int>(i), best, 1.0 - bd / 6.0});
  }
  for (std::size_t j = 0; j < used.size(); ++j)
    if (!used[j]) out.unmatched_b.push_back(static_cast<int>(j));
  return out;
}

// Uses the pixels: the mean intensity around each A midpoint picks the B line
// whose midpoint patch is closest. Enough to make the image transforms matter.
MatchSet patch_matcher(const ImagePairRecord& r) {
  auto patch = [](const cv::Mat& img, const LineSegment& s) {
    const cv::Point c(static_cast<int>(std::lround(s.midpoint().x())), static_cast<int>(std::lround(s.midpoint().y())));
    const cv::Rect box = cv::Rect(c.x - 3, c.y - 3, 7, 7) & cv::Rect(0, 0, img.cols, img.rows);
    return cv::mean(img(box));
  };
  MatchSet out;
  std::vector<char> used(r.lines_b.size(), 0);
  for (std::size_t i = 0; i < r.lines_a.size(); ++i) {
    const cv::Scalar pa = patch(r.image_a, r.lines_a[i]);
    int best = -1;
    double bd = 1e300;
    for (std::size_t j = 0; j < r.lines_b.size(); ++j) {
      if (used[j]) continue;
      const cv::Scalar pb = patch(r.image_b, r.lines_b[j]);
      const double d = cv::norm(pa - pb) + (r.lines_a[i].midpoint() - r.lines_b[j].midpoint()).norm();
      if (d < bd) {
        bd = d;
        best = static_cast<int>(j);
      }
    }
    if (best < 0 || bd > 30.0) {
      out.unmatched_a.push_back(static_cast<int>(i));
      continue;
    }
    used[static_cast<std::size_t>(best)] = 1;
    out.matches.push_back({static_cast<int>(i), best, 1.0 / (1.0 + bd)});
  }
  for (std::size_t j = 0; j < used.size(); ++j)
    if (!used[j]) out.unmatched_b.push_back(static_cast<int>(j));
  return out;
}

std::vector<ImagePairRecord> small_set(int n, std::uint64_t seed) {
  SyntheticConfig cfg;
  return generate_dataset(n, seed, cfg, FilterConfig{});
}

bool metrics_equal(const MatchMetrics& a, const MatchMetrics& b) {
  return a.precision == b.precision && a.recall == b.recall && a.f_measure == b.f_measure &&
         a.true_positives == b.true_positives && a.predicted == b.predicted && a.ground_truth == b.ground_truth;
}

}  // namespace

TEST_CASE("f-measure reproduces the reference table rows") {
  CHECK(std::abs(f_measure(85.46, 45.29) - 59.20) <= 0.01);
  CHECK(std::abs(f_measure(86.12, 70.47) - 77.51) <= 0.01);
  CHECK(f_measure(0.0, 0.0) == 0.0);
  CHECK(f_measure(100.0, 0.0) == 0.0);
}

TEST_CASE("f-measure is symmetric and bounded by the arithmetic mean") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  for (int t = 0; t < 2000; ++t) {
    const double p = u(rng), r = u(rng);
    const double f = f_measure(p, r);
    CHECK(f == f_measure(r, p));
    CHECK(f <= (p + r) / 2 + 1e-12);
    CHECK(f >= std::min(p, r) - 1e-12);
    CHECK(f <= std::max(p, r) + 1e-12);
  }
}

TEST_CASE("perfect prediction scores 100 everywhere") {
  MatchGroundTruth gt = MatchGroundTruth::from_pairs({{0, 2}, {1, 0}, {3, 1}}, 5, 4);
  MatchSet pred;
  for (const auto& [a, b] : gt.pairs) pred.matches.push_back({a, b, 0.9});
  const MatchMetrics m = precision_recall_f(pred, gt);
  CHECK(m.precision == 100.0);
  CHECK(m.recall == 100.0);
  CHECK(m.f_measure == 100.0);
  CHECK(m.true_positives == 3);
}

TEST_CASE("counts agree with a brute-force set intersection") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 1000), m = 1 + static_cast<int>(rng() % 1000);
    auto random_injection = [&](int count) {
      std::vector<int> a(static_cast<std::size_t>(n)), b(static_cast<std::size_t>(m));
      std::iota(a.begin(), a.end(), 0);
      std::iota(b.begin(), b.end(), 0);
      std::shuffle(a.begin(), a.end(), rng);
      std::shuffle(b.begin(), b.end(), rng);
      std::vector<std::pair<int, int>> out;
      for (int k = 0; k < std::min({count, n, m}); ++k) out.emplace_back(a[static_cast<std::size_t>(k)], b[static_cast<std::size_t>(k)]);
      return out;
    };
    const auto truth = random_injection(static_cast<int>(rng() % 1001));
    auto guess = random_injection(static_cast<int>(rng() % 1001));
    // Plant some true pairs so the intersection is not always tiny.
    std::set<int> ga, gb;
    for (const auto& [a, b] : guess) ga.insert(a), gb.insert(b);
    for (std::size_t k = 0; k < truth.size(); k += 3)
      if (!ga.count(truth[k].first) && !gb.count(truth[k].second)) {
        guess.push_back(truth[k]);
        ga.insert(truth[k].first);
        gb.insert(truth[k].second);
      }
    MatchSet pred;
    for (const auto& [a, b] : guess) pred.matches.push_back({a, b, 1.0});
    const MatchGroundTruth gt = MatchGroundTruth::from_pairs(truth, n, m);
    int tp = 0;
    for (const auto& p : guess)
      for (const auto& t : truth) tp += (p == t);
    const MatchMetrics got = precision_recall_f(pred, gt);
    CHECK(got.true_positives == tp);
    CHECK(got.predicted == static_cast<int>(guess.size()));
    CHECK(got.ground_truth == static_cast<int>(truth.size()));
    if (!guess.empty()) CHECK(got.precision == doctest::Approx(100.0 * tp / static_cast<double>(guess.size())));
    if (!truth.empty()) CHECK(got.recall == doctest::Approx(100.0 * tp / static_cast<double>(truth.size())));
  }
}

TEST_CASE("undefined precision and recall are flagged") {
  const MatchGroundTruth gt = MatchGroundTruth::from_pairs({{0, 0}}, 2, 2);
  const MatchMetrics none = precision_recall_f(MatchSet{}, gt);
  CHECK(none.precision_undefined);
  CHECK(none.precision == 0.0);
  CHECK(none.recall == 0.0);

  const MatchGroundTruth empty = MatchGroundTruth::from_pairs({}, 2, 2);
  MatchSet pred;
  pred.matches.push_back({0, 1, 1.0});
  const MatchMetrics u = precision_recall_f(pred, empty);
  CHECK(u.recall_undefined);

  // The undefined-recall pair does not enter the pooled counts.
  MatchSet good;
  good.matches.push_back({0, 0, 1.0});
  const std::vector<MatchMetrics> per = {precision_recall_f(good, gt), u};
  const MatchMetrics agg = aggregate(per);
  CHECK(agg.precision == 100.0);
  CHECK(agg.recall == 100.0);
}

TEST_CASE("aggregation pools counts rather than averaging percentages") {
  MatchMetrics a, b;
  a.true_positives = 1, a.predicted = 1, a.ground_truth = 1;
  b.true_positives = 1, b.predicted = 9, b.ground_truth = 3;
  const std::vector<MatchMetrics> per = {a, b};
  const MatchMetrics m = aggregate(per);
  CHECK(m.precision == doctest::Approx(20.0));
  CHECK(m.recall == doctest::Approx(50.0));
}

TEST_CASE("default sweep ranges") {
  const auto blur = default_sweep_values(SweepAxis::Blur);
  REQUIRE(blur.size() == 6);
  CHECK(blur.front() == 0.5);
  CHECK(blur.back() == 3.0);
  CHECK(std::is_sorted(blur.begin(), blur.end()));
  const auto scale = default_sweep_values(SweepAxis::Scale);
  CHECK(scale.front() == doctest::Approx(0.4));
  CHECK(scale.back() == 1.0);
  for (double s : scale) CHECK((s >= 0.4 - 1e-12 && s <= 1.0));
  const auto rot = default_sweep_values(SweepAxis::Rotation);
  CHECK(rot.front() == 0.0);
  CHECK(rot.back() == 90.0);
  CHECK(parse_axis("blur") == SweepAxis::Blur);
  CHECK_FALSE(parse_axis("shear").has_value());
}

TEST_CASE("identity transforms reproduce the direct evaluation bit for bit") {
  const auto records = small_set(4, 21);
  std::vector<MatchMetrics> direct;
  for (const auto& r : records) direct.push_back(precision_recall_f(patch_matcher(r), r.gt));
  const MatchMetrics want = aggregate(direct);

  const std::pair<SweepAxis, double> cases[] = {
      {SweepAxis::Rotation, 0.0}, {SweepAxis::Blur, 0.0}, {SweepAxis::Scale, 1.0}};
  for (const auto& [axis, v] : cases) {
    CAPTURE(axis_name(axis));
    for (const auto& r : records) {
      const ImagePairRecord t = transform_record(r, axis, v);
      CHECK(t.lines_a == r.lines_a);
      CHECK(t.lines_b == r.lines_b);
      CHECK(t.gt == r.gt);
      CHECK(cv::norm(t.image_a, r.image_a, cv::NORM_INF) == 0.0);
      CHECK(cv::norm(t.image_b, r.image_b, cv::NORM_INF) == 0.0);
    }
    const SweepResult s = robustness_sweep(patch_matcher, records, axis, {v});
    REQUIRE(s.points.size() == 1);
    CHECK(s.points[0].defined);
    CHECK(metrics_equal(s.points[0].metrics, want));
  }
}

TEST_CASE("pure scale multiplies every endpoint by the factor exactly") {
  const auto records = small_set(3, 8);
  for (double s : default_sweep_values(SweepAxis::Scale)) {
    for (const auto& r : records) {
      const ImagePairRecord t = transform_record(r, SweepAxis::Scale, s);
      REQUIRE(t.lines_a.size() == r.lines_a.size());
      REQUIRE(t.lines_b.size() == r.lines_b.size());
      for (std::size_t i = 0; i < r.lines_a.size(); ++i) {
        CHECK(t.lines_a[i].p0 == r.lines_a[i].p0 * s);
        CHECK(t.lines_a[i].p1 == r.lines_a[i].p1 * s);
      }
      for (std::size_t j = 0; j < r.lines_b.size(); ++j) CHECK(t.lines_b[j].p1 == r.lines_b[j].p1 * s);
      CHECK(t.gt == r.gt);
      // A midpoint matcher is invariant to a common similarity.
      const auto ma = precision_recall_f(nearest_midpoint(t), t.gt);
      CHECK(ma.ground_truth == static_cast<int>(r.gt.pairs.size()));
    }
  }
}

TEST_CASE("opposite rotations keep ground-truth lines consistent") {
  const auto records = small_set(2, 4);
  for (const auto& r : records) {
    const ImagePairRecord t = transform_record(r, SweepAxis::Rotation, 30.0);
    t.gt.validate(static_cast<int>(t.lines_a.size()), static_cast<int>(t.lines_b.size()));
    CHECK(t.gt.pairs.size() <= r.gt.pairs.size());
    CHECK(t.gt.pairs.size() > 0);
  }
}

TEST_CASE("blur sweep yields six ascending points") {
  const auto records = small_set(3, 2);
  const SweepResult s = robustness_sweep(patch_matcher, records, SweepAxis::Blur, default_sweep_values(SweepAxis::Blur));
  REQUIRE(s.points.size() == 6);
  for (std::size_t k = 0; k < 6; ++k) {
    CHECK(s.points[k].value == doctest::Approx(0.5 * static_cast<double>(k + 1)));
    CHECK(s.points[k].defined);
  }
  CHECK_THROWS_AS(robustness_sweep(patch_matcher, records, SweepAxis::Blur, {1.0, 0.5}), ValidationError);
}

TEST_CASE("a transform that empties the ground truth gives an undefined point") {
  auto records = small_set(1, 3);
  // Shrink so far that every line falls under the minimum length.
  const SweepResult s = robustness_sweep(nearest_midpoint, records, SweepAxis::Scale, {0.01, 1.0});
  REQUIRE(s.points.size() == 2);
  CHECK_FALSE(s.points[0].defined);
  CHECK(s.points[1].defined);
}

TEST_CASE("ablation rows keep the requested order and report missing variants") {
  const auto rows = table_rows();
  REQUIRE(rows.size() == 4);
  CHECK(rows[0] == AblationToggles{true, true, true});
  CHECK(rows[1] == AblationToggles{true, true, false});
  CHECK(rows[2] == AblationToggles{true, false, false});
  CHECK(rows[3] == AblationToggles{false, false, false});

  const auto records = small_set(2, 9);
  const std::vector<AblationToggles> two = {{true, true, true}, {false, false, false}};
  const auto out = ablation_run(records, two, [](const AblationToggles& t) -> std::optional<Matcher> {
    if (t.feature_loss) return Matcher(nearest_midpoint);
    return std::nullopt;
  });
  REQUIRE(out.size() == 2);
  CHECK(out[0].toggles == two[0]);
  REQUIRE(out[0].metrics.has_value());
  CHECK(out[0].notice.empty());
  CHECK_FALSE(out[1].metrics.has_value());
  CHECK(out[1].notice.find("off/off/off") != std::string::npos);

  const fs::path dir = fs::temp_directory_path() / "linematch_test_ablation";
  fs::create_directories(dir);
  write_ablation_csv(out, dir / "ablation.csv");
  std::ifstream in(dir / "ablation.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header.find("precision") != std::string::npos);
  CHECK(header.find("recall") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("metrics serialise with the expected keys") {
  MatchMetrics m;
  m.precision = 80, m.recall = 60, m.f_measure = f_measure(80, 60);
  const auto j = metrics_to_json(m);
  CHECK(j.contains("precision"));
  CHECK(j.contains("recall"));
  CHECK(j.contains("f_measure"));
  CHECK(metrics_csv_row("x", m).rfind("x,80.0000,60.0000,", 0) == 0);
}

TEST_CASE("match sets round-trip through JSON") {
  MatchSet m;
  m.matches = {{0, 3, 0.75}, {2, 1, 0.1 + 0.2}};
  m.unmatched_a = {1};
  m.unmatched_b = {0, 2};
  const MatchSet back = matchset_from_json(nlohmann::json::parse(matchset_to_json(m).dump()));
  CHECK(back.matches == m.matches);
  CHECK(back.unmatched_a == m.unmatched_a);
  CHECK(back.unmatched_b == m.unmatched_b);
  CHECK_THROWS_AS(matchset_from_json(nlohmann::json::object()), ParseError);
}

TEST_CASE("overlay colours follow the legend") {
  const cv::Mat img(64, 64, CV_8UC3, cv::Scalar(30, 30, 30));
  const std::vector<LineSegment> la = {{5, 5, 50, 5}, {5, 20, 50, 20}, {5, 40, 50, 40}};
  const std::vector<LineSegment> lb = {{5, 5, 50, 5}, {5, 20, 50, 20}};
  MatchSet m;
  m.matches = {{0, 0, 0.9}, {1, 1, 0.8}};
  m.unmatched_a = {2};

  const Overlay plain = render_overlay(img, img, la, lb, m);
  CHECK(plain.colours == std::set<Colour>{{255, 0, 0}, {0, 255, 255}});
  CHECK(plain.image.cols == 128);

  const MatchGroundTruth gt = MatchGroundTruth::from_pairs({{0, 0}, {1, 1}}, 3, 2);
  const Overlay good = render_overlay(img, img, la, lb, m, &gt);
  CHECK(good.colours == std::set<Colour>{{0, 255, 0}, {0, 255, 255}});

  MatchSet bad = m;
  bad.matches[1].b = 0, bad.matches[0].b = 1;
  const Overlay wrong = render_overlay(img, img, la, lb, bad, &gt);
  CHECK(wrong.colours.count({0, 0, 255}));
  CHECK_FALSE(wrong.colours.count({255, 0, 0}));

  // The strokes land on the canvas: the pure colour appears somewhere.
  std::vector<cv::Mat> ch;
  cv::split(good.image, ch);
  double gmax = 0;
  cv::minMaxLoc(ch[1], nullptr, &gmax);
  CHECK(gmax == 255.0);
}

TEST_CASE("sweep plot and CSV are produced") {
  SweepResult s;
  s.axis = SweepAxis::Blur;
  for (double v : default_sweep_values(SweepAxis::Blur)) {
    SweepPoint p;
    p.value = v;
    p.metrics.precision = 90 - 5 * v;
    p.metrics.recall = 70 - 8 * v;
    s.points.push_back(p);
  }
  const cv::Mat plot = plot_sweep(s);
  CHECK(plot.rows == 400);
  CHECK(plot.cols == 640);
  const auto j = sweep_to_json(s);
  CHECK(j["axis"] == "blur");
  CHECK(j["points"].size() == 6);
}
