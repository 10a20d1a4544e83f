#include <doctest.h>

#include <random>

#include "linematch/backbone.hpp"
#include "linematch/descriptor.hpp"
#include "linematch/errors.hpp"
#include "linematch/losses.hpp"
#include "linematch/transport.hpp"
#include "support/scenarios.hpp"

using namespace linematch;
using lmtest::random_matrix;
using lmtest::random_unit_rows;

TEST_CASE("gaussian weights are symmetric, peaked and normalised") {
  for (double sigma : {0.5, 1.0, 1.75, 4.0}) {
    const Vector w = gaussian_weights(7, sigma);
    REQUIRE(w.size() == 7);
    CHECK(w.sum() == doctest::Approx(1.0));
    for (int i = 0; i < 7; ++i) CHECK(w(i) == w(6 - i));
    Eigen::Index arg;
    w.maxCoeff(&arg);
    CHECK(arg == 3);
    for (int i = 0; i < 3; ++i) CHECK(w(i) < w(i + 1));
  }
  const Vector w = gaussian_weights(7, 1.75);
  const auto ref = lmtest::gaussian_oracle(7, 1.75);
  for (int i = 0; i < 7; ++i) CHECK(w(i) == doctest::Approx(ref[i]).epsilon(1e-12));
  CHECK(gaussian_weights(1, 0.3)(0) == 1.0);
  CHECK_THROWS_AS(gaussian_weights(6, 1.0), ValidationError);
  CHECK_THROWS_AS(gaussian_weights(7, 0.0), ValidationError);
  CHECK_THROWS_AS(gaussian_weights(7, -1.0), ValidationError);
}

TEST_CASE("glpool of a constant map is the constant") {
  FeatureMap map;
  map.height = 20;
  map.width = 24;
  map.stride = 4;
  map.values = Matrix::Constant(3, 20 * 24, 0.75);
  map.values.row(1).setConstant(-2.0);
  GLPoolConfig cfg;
  for (const LineSegment& s : {LineSegment(3, 4, 80, 70), LineSegment(90, 2, 10, 75), LineSegment(0, 0, 6, 0)}) {
    const Vector v = glpool(map, s, cfg);
    CHECK(v(0) == doctest::Approx(0.75));
    CHECK(v(1) == doctest::Approx(-2.0));
  }
}

TEST_CASE("reversing a segment keeps the descriptor when m divides into w groups") {
  std::mt19937_64 rng(3);
  FeatureMap map;
  map.height = map.width = 32;
  map.values = random_matrix(5, 32 * 32, rng);
  GLPoolConfig cfg;
  const LineSegment s(4.2, 6.1, 12.2, 12.1);  // length 10 -> m = 10, w = 5
  REQUIRE(samples_along(s.length(), 1) % cfg.groups == 0);
  const Vector a = glpool(map, s, cfg), b = glpool(map, s.reversed(), cfg);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("glpool agrees with the brute-force rectangle oracle") {
  CHECK(lmtest::glpool_oracle_error() < 1e-5);
}

TEST_CASE("short segments use fewer groups than requested") {
  // m = 3 < w = 5: three singleton groups.
  const Matrix map = lmtest::ramp_map();
  const LineSegment s(5.5, 8, 8.5, 8);
  GLPoolConfig cfg;
  const double got = glpool(lmtest::as_feature_map(map), s, cfg)(0);
  CHECK(got == doctest::Approx(lmtest::glpool_rect_oracle(map, s, 7, 5, cfg.effective_sigma())).epsilon(1e-12));
}

TEST_CASE("glpool rejects degenerate segments and bad configs") {
  const FeatureMap map = lmtest::as_feature_map(lmtest::ramp_map());
  CHECK_THROWS_AS(glpool(map, LineSegment(3, 3, 3, 3), GLPoolConfig{}), ValidationError);
  GLPoolConfig even;
  even.width = 6;
  CHECK_THROWS_AS(glpool(map, LineSegment(1, 1, 9, 9), even), ValidationError);
}

TEST_CASE("glpool gradient matches finite differences") {
  std::mt19937_64 rng(8);
  const Matrix x = random_matrix(3, 12 * 14, rng);
  const Matrix w = random_matrix(2, 3, rng);
  const std::vector<LineSegment> segs = {{1.3, 2.2, 10.7, 9.1}, {12.0, 1.0, 2.5, 10.5}};
  auto fn = [&](ad::Tape& t, const std::vector<ad::Var>& v) {
    FeatureMapVar map{v[0], 12, 14, 1};
    return ad::sum(ad::cmul(glpool(map, segs, GLPoolConfig{}), t.constant(w)));
  };
  CHECK(lmtest::gradcheck(fn, {x}) < 1e-4);
}

TEST_CASE("describe_lines produces unit descriptors in input order") {
  BackboneConfig bc;
  bc.channels = {16, 64, 64, 64};
  const auto params = BackboneParams::init(bc, 1);
  cv::Mat img(64, 64, CV_8UC3);
  cv::RNG(5).fill(img, cv::RNG::UNIFORM, 0, 256);
  const auto maps = extract_feature_maps(to_tensor(img), bc, params);
  const std::vector<LineSegment> segs = {{5, 5, 50, 40}, {60, 3, 10, 60}, {5, 5, 50, 40}, {20, 30, 30, 30}};
  const Matrix d = describe_lines(maps, segs, GLPoolConfig{});
  CHECK(d.rows() == 4);
  CHECK(d.cols() == 128);
  for (int i = 0; i < 4; ++i) CHECK(d.row(i).norm() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(d.row(0) == d.row(2));
  CHECK_FALSE(d.row(0).isApprox(d.row(1)));

  CHECK_THROWS_AS(describe_lines(maps, std::vector<LineSegment>{}, GLPoolConfig{}), ValidationError);
  const std::vector<LineSegment> bad = {{5, 5, 50, 40}, {7, 7, 7, 7}};
  try {
    describe_lines(maps, bad, GLPoolConfig{});
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("segment 1") != std::string::npos);
  }
}

TEST_CASE("exclusion keeps lines with a close counterpart") {
  Matrix e1 = Matrix::Zero(1, 3), e2 = Matrix::Zero(1, 3);
  e1(0, 0) = 1;
  e2(0, 1) = 1;
  auto [ka, kb] = exclude_non_matches(e1, e1, 0.5);
  CHECK(ka == std::vector<int>{0});
  CHECK(kb == std::vector<int>{0});
  std::tie(ka, kb) = exclude_non_matches(e1, e2, 0.5);
  CHECK(ka.empty());
  CHECK(kb.empty());
  std::tie(ka, kb) = exclude_non_matches(Matrix(0, 3), e2, 0.5);
  CHECK(ka.empty());
  CHECK(kb.empty());
}

TEST_CASE("exclusion equals a pairwise double loop") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix fa = random_unit_rows(5, 3, rng), fb = random_unit_rows(4, 3, rng);
    const auto [ka, kb] = exclude_non_matches(fa, fb, 0.8);
    std::vector<int> ea, eb;
    for (int i = 0; i < 5; ++i) {
      bool keep = false;
      for (int j = 0; j < 4; ++j) keep = keep || fa.row(i).dot(fb.row(j)) >= 0.8;
      if (keep) ea.push_back(i);
    }
    for (int j = 0; j < 4; ++j) {
      bool keep = false;
      for (int i = 0; i < 5; ++i) keep = keep || fa.row(i).dot(fb.row(j)) >= 0.8;
      if (keep) eb.push_back(j);
    }
    CHECK(ka == ea);
    CHECK(kb == eb);
    // No pair above threshold loses either side.
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 4; ++j)
        if (fa.row(i).dot(fb.row(j)) >= 0.8) {
          CHECK(std::count(ka.begin(), ka.end(), i) == 1);
          CHECK(std::count(kb.begin(), kb.end(), j) == 1);
        }
  }
}

TEST_CASE("dustbin row is appended last and shared") {
  std::mt19937_64 rng(4);
  const Parameter u = init_dustbin(6, 9);
  CHECK(u.value.norm() == doctest::Approx(1.0));
  const Matrix da = random_unit_rows(3, 6, rng), db = random_unit_rows(5, 6, rng);
  const DescriptorSet sa = append_dustbin(da, {0, 2, 4}, u.value);
  const DescriptorSet sb = append_dustbin(db, {0, 1, 2, 3, 4}, u.value);
  CHECK(sa.descriptors.rows() == 4);
  CHECK(sb.descriptors.rows() == 6);
  CHECK(sa.descriptors.row(3) == sb.descriptors.row(5));
  CHECK(sa.kept_indices == std::vector<int>{0, 2, 4});
  CHECK_THROWS_AS(append_dustbin(da, {0, 1}, u.value), DimensionError);
  Matrix nan = u.value;
  nan(0, 0) = std::nan("");
  CHECK_THROWS_AS(append_dustbin(da, {0, 1, 2}, nan), ValidationError);

  // One parameter on the tape: gradients from both graphs land on it.
  ad::Tape t;
  auto uv = t.parameter(u);
  auto fa = append_dustbin(t.constant(da), uv);
  auto fb = append_dustbin(t.constant(db), uv);
  t.backward(ad::add(ad::sum(fa), ad::scale(ad::sum(fb), 2.0)));
  CHECK(t.grad(uv).isApprox(Matrix::Constant(1, 6, 3.0)));
}

TEST_CASE("loss gradient reaches the dustbin when a line is unmatched") {
  // One line per image, not a match: P is 2 x 2 and the loss reads the dustbin entries.
  std::mt19937_64 rng(12);
  const Matrix la = random_unit_rows(1, 4, rng), lb = random_unit_rows(1, 4, rng);
  const Matrix u = random_unit_rows(1, 4, rng);
  const MatchGroundTruth gt = MatchGroundTruth::from_pairs({}, 1, 1);
  auto loss_of = [&](ad::Tape& t, const std::vector<ad::Var>& v) {
    auto fa = append_dustbin(t.constant(la), v[0]);
    auto fb = append_dustbin(t.constant(lb), v[0]);
    auto sol = solve_matching(fa, fb, t.constant(Matrix::Identity(4, 4)), 0.5, SinkhornConfig{});
    return matching_loss_from_log(sol.sinkhorn.log_plan, gt);
  };
  // Finite-difference probe of the gradient norm.
  double fd_norm = 0.0;
  for (int k = 0; k < 4; ++k) {
    Matrix up = u, down = u;
    up(0, k) += 1e-6;
    down(0, k) -= 1e-6;
    ad::Tape t1, t2;
    const double d = (loss_of(t1, {t1.constant(up)}).scalar() - loss_of(t2, {t2.constant(down)}).scalar()) / 2e-6;
    fd_norm += d * d;
  }
  CHECK(std::sqrt(fd_norm) > 1e-4);
  CHECK(lmtest::gradcheck(loss_of, {u}) < 1e-3);
}

TEST_CASE("support region pooling is more stable under endpoint jitter than point sampling") {
  const auto r = lmtest::endpoint_robustness(17);
  MESSAGE("glpool " << r.glpool << " vs points " << r.baseline);
  CHECK(r.glpool > r.baseline);
}
