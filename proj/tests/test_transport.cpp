#include <doctest.h>

#include <random>

#include "linematch/errors.hpp"
#include "linematch/losses.hpp"
#include "linematch/transport.hpp"
#include "support/scenarios.hpp"

using namespace linematch;
using lmtest::random_matrix;
using lmtest::random_unit_rows;

TEST_CASE("affinity closed form and temperature scaling") {
  Matrix f = Matrix::Zero(3, 2);
  f.topRows(2).setIdentity();
  const Matrix logits = affinity(f, f, Matrix::Identity(2, 2), 1.0);
  const Matrix m = logits.array().exp();
  CHECK(m(0, 0) == doctest::Approx(std::exp(1.0)));
  CHECK(m(1, 1) == doctest::Approx(std::exp(1.0)));
  CHECK(m(0, 1) == doctest::Approx(1.0));
  CHECK(m(1, 0) == doctest::Approx(1.0));

  std::mt19937_64 rng(1);
  const Matrix fa = random_matrix(4, 3, rng), fb = random_matrix(4, 3, rng), c = random_matrix(3, 3, rng);
  const Matrix l1 = affinity(fa, fb, c, 0.5), l2 = affinity(fa, fb, c, 0.25);
  CHECK(l2.isApprox(2.0 * l1, 1e-14));
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      double s = 0.0;
      for (int p = 0; p < 3; ++p)
        for (int q = 0; q < 3; ++q) s += fa(i, p) * c(p, q) * fb(j, q);
      CHECK(l1(i, j) == doctest::Approx(s / 0.5).epsilon(1e-12));
    }
  CHECK_THROWS_AS(affinity(fa, fb, c, 0.0), ValidationError);
  CHECK_THROWS_AS(affinity(fa, fb, random_matrix(2, 3, rng), 1.0), DimensionError);
}

TEST_CASE("sinkhorn rank-one fixed point") {
  Vector a(3), b(3);
  a << 1, 1, 2;
  b << 1, 1, 2;
  const SinkhornResult r = sinkhorn(Matrix::Zero(3, 3), a, b, SinkhornConfig{});
  Matrix want(3, 3);
  want << .25, .25, .5, .25, .25, .5, .5, .5, 1;
  CHECK(r.converged);
  CHECK(r.plan.isApprox(want, 1e-12));
  CHECK_THROWS_AS(sinkhorn(Matrix::Zero(3, 3), a, Vector::Ones(3), SinkhornConfig{}), ValidationError);
}

TEST_CASE("sinkhorn marginals on random instances up to 64x64") {
  const auto s = lmtest::sinkhorn_marginal_suite(2, 40);
  CHECK(s.passed == s.instances);
  CHECK(s.worst_residual <= 1e-6);
}

TEST_CASE("non-convergence is flagged") {
  std::mt19937_64 rng(3);
  SinkhornConfig cfg;
  cfg.max_iters = 1;
  const auto [a, b] = dustbin_marginals(6, 9);
  const SinkhornResult r = sinkhorn(random_matrix(7, 10, rng, -20, 20), a, b, cfg);
  CHECK_FALSE(r.converged);
  CHECK(r.iterations == 1);
}

TEST_CASE("sharpened sinkhorn recovers the optimal permutation") {
  const auto s = lmtest::assignment_oracle_suite(4, 20);
  CHECK(s.agree >= 19);
}

TEST_CASE("solve_matching cases") {
  std::mt19937_64 rng(5);
  const Matrix f = random_unit_rows(6, 8, rng);
  ad::Tape t;
  const auto sol = solve_matching(t.constant(f), t.constant(f), t.constant(Matrix::Identity(8, 8)), 0.05,
                                  SinkhornConfig{});
  const Matrix& p = sol.sinkhorn.plan;
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j)
      if (j != i) CHECK(p(i, i) > p(i, j));

  // One line against none: all mass goes to B's dustbin.
  ad::Tape t2;
  const auto lone = solve_matching(t2.constant(random_unit_rows(2, 4, rng)), t2.constant(random_unit_rows(1, 4, rng)),
                                   t2.constant(Matrix::Identity(4, 4)), 0.5, SinkhornConfig{});
  REQUIRE(lone.sinkhorn.plan.rows() == 2);
  REQUIRE(lone.sinkhorn.plan.cols() == 1);
  CHECK(lone.sinkhorn.plan(0, 0) == doctest::Approx(1.0));
  CHECK(lone.sinkhorn.plan(1, 0) == doctest::Approx(0.0));

  // Marginals for rectangular instances.
  for (auto [n, m] : {std::pair{20, 30}, std::pair{7, 3}, std::pair{1, 12}}) {
    ad::Tape t3;
    const auto s = solve_matching(t3.constant(random_unit_rows(n + 1, 8, rng)),
                                  t3.constant(random_unit_rows(m + 1, 8, rng)), t3.constant(Matrix::Identity(8, 8)),
                                  0.5, SinkhornConfig{});
    const auto [a, b] = dustbin_marginals(n, m);
    CHECK((s.sinkhorn.plan.rowwise().sum() - a).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK((s.sinkhorn.plan.colwise().sum().transpose() - b).cwiseAbs().maxCoeff() <= 1e-6);
  }
}

TEST_CASE("extract_matches") {
  Matrix p = Matrix::Zero(4, 4);
  p(0, 1) = p(1, 2) = p(2, 0) = 1.0;
  p(3, 3) = 3.0;
  MatchSet m = extract_matches(p, 0.2);
  REQUIRE(m.matches.size() == 3);
  CHECK(m.matches[0] == Match{0, 1, 1.0});
  CHECK(m.matches[1] == Match{1, 2, 1.0});
  CHECK(m.matches[2] == Match{2, 0, 1.0});
  CHECK(m.unmatched_a.empty());

  Matrix q = Matrix::Constant(3, 3, 0.1);
  q(0, 2) = 0.8;  // row 0 prefers the dustbin
  q(1, 0) = 0.7;
  m = extract_matches(q, 0.2);
  CHECK(m.unmatched_a == std::vector<int>{0});
  REQUIRE(m.matches.size() == 1);
  CHECK(m.matches[0].a == 1);
  CHECK(m.unmatched_b == std::vector<int>{1});

  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix r = random_matrix(6, 6, rng, 0.0, 1.0);
    const MatchSet got = extract_matches(r, 0.3);
    const auto want = lmtest::mutual_argmax_oracle(r, 0.3);
    REQUIRE(got.matches.size() == want.size());
    for (std::size_t k = 0; k < want.size(); ++k) {
      CHECK(got.matches[k].a == want[k].first);
      CHECK(got.matches[k].b == want[k].second);
    }
    CHECK(got.matches.size() + got.unmatched_a.size() == 5);
    CHECK(got.matches.size() + got.unmatched_b.size() == 5);
    const MatchSet scaled = extract_matches(3.5 * r, 3.5 * 0.3);
    CHECK(scaled.matches.size() == got.matches.size());
    for (std::size_t k = 0; k < got.matches.size(); ++k) {
      CHECK(scaled.matches[k].a == got.matches[k].a);
      CHECK(scaled.matches[k].b == got.matches[k].b);
    }
  }
}

TEST_CASE("gradients through affinity and sinkhorn") {
  std::mt19937_64 rng(7);
  using V = std::vector<ad::Var>;
  const Matrix w = random_matrix(4, 5, rng);
  auto aff = [&](ad::Tape& t, const V& v) { return ad::sum(ad::cmul(affinity(v[0], v[1], v[2], 0.5), t.constant(w))); };
  CHECK(lmtest::gradcheck(aff, {random_matrix(4, 3, rng), random_matrix(5, 3, rng), random_matrix(3, 3, rng)}) < 1e-4);

  // n = 3, m = 4 plus dustbins.
  const auto gt = MatchGroundTruth::from_pairs({{0, 1}, {2, 3}}, 3, 4);
  auto chain = [&](ad::Tape& t, const V& v) {
    auto sol = solve_matching(v[0], v[1], t.constant(Matrix::Identity(3, 3)), 0.5, SinkhornConfig{});
    return matching_loss_from_log(sol.sinkhorn.log_plan, gt);
  };
  CHECK(lmtest::gradcheck(chain, {random_matrix(4, 3, rng), random_matrix(5, 3, rng)}) < 1e-3);
  auto chain_p = [&](ad::Tape& t, const V& v) {
    auto sol = solve_matching(v[0], v[1], t.constant(Matrix::Identity(3, 3)), 0.5, SinkhornConfig{});
    return matching_loss(ad::exp(sol.sinkhorn.log_plan), gt);
  };
  CHECK(lmtest::gradcheck(chain_p, {random_matrix(4, 3, rng), random_matrix(5, 3, rng)}) < 1e-3);
}
