#include <doctest.h>

#include <random>

#include <opencv2/core.hpp>

#include "linematch/backbone.hpp"
#include "linematch/errors.hpp"
#include "linematch/image.hpp"
#include "support/gradcheck.hpp"

using namespace linematch;

namespace {

ImageTensor random_image(int h, int w, int c, unsigned seed) {
  cv::Mat m(h, w, c == 3 ? CV_8UC3 : CV_8UC1);
  cv::RNG rng(seed);
  rng.fill(m, cv::RNG::UNIFORM, 0, 256);
  return to_tensor(m);
}

}  // namespace

TEST_CASE("256x256 input yields 64x64 and 16x16 taps") {
  BackboneConfig cfg;
  const auto params = BackboneParams::init(cfg, 1);
  const auto maps = extract_feature_maps(random_image(256, 256, 3, 1), cfg, params);
  CHECK(cfg.shallow_stride() == 4);
  CHECK(cfg.deep_stride() == 16);
  CHECK(maps.shallow.height == 64);
  CHECK(maps.shallow.width == 64);
  CHECK(maps.deep.height == 16);
  CHECK(maps.deep.width == 16);
  CHECK(maps.shallow.values.rows() == cfg.shallow_channels());
  CHECK(maps.deep.values.rows() == cfg.deep_channels());
  CHECK(maps.deep.stride % maps.shallow.stride == 0);
  CHECK(maps.shallow.values.allFinite());
}

TEST_CASE("tap shapes are ceil divisions across sizes") {
  BackboneConfig cfg;
  const auto params = BackboneParams::init(cfg, 2);
  const std::pair<int, int> sizes[] = {{32, 32}, {33, 47}, {100, 61}, {257, 40}, {1024, 35}, {37, 1024}};
  for (const auto& [h, w] : sizes) {
    const auto maps = extract_feature_maps(random_image(h, w, 3, 3), cfg, params);
    CHECK(maps.shallow.height == (h + 3) / 4);
    CHECK(maps.shallow.width == (w + 3) / 4);
    CHECK(maps.deep.height == (h + 15) / 16);
    CHECK(maps.deep.width == (w + 15) / 16);
  }
}

TEST_CASE("forward pass is deterministic") {
  BackboneConfig cfg;
  const auto params = BackboneParams::init(cfg, 5);
  const auto img = random_image(64, 80, 3, 9);
  const auto m1 = extract_feature_maps(img, cfg, params);
  const auto m2 = extract_feature_maps(img, cfg, params);
  CHECK(m1.shallow.values == m2.shallow.values);
  CHECK(m1.deep.values == m2.deep.values);
  CHECK(BackboneParams::init(cfg, 5).kernels[2].value == params.kernels[2].value);
}

TEST_CASE("zero image with zero biases gives zero maps") {
  BackboneConfig cfg;
  auto params = BackboneParams::init(cfg, 4);
  for (auto& b : params.biases) b.value.setZero();
  ImageTensor img{64, 64, 3, Matrix::Zero(3, 64 * 64)};
  const auto maps = extract_feature_maps(img, cfg, params);
  CHECK(maps.shallow.values.isZero(0));
  CHECK(maps.deep.values.isZero(0));
}

TEST_CASE("parameter counts follow the architecture") {
  BackboneConfig cfg;
  const auto params = BackboneParams::init(cfg, 1);
  std::size_t expect = 0;
  int cin = cfg.in_channels;
  for (int c : cfg.channels) {
    expect += static_cast<std::size_t>(c) * cin * 9 + c;
    cin = c;
  }
  CHECK(params.parameter_count() == expect);
}

TEST_CASE("invalid images are rejected") {
  BackboneConfig cfg;
  const auto params = BackboneParams::init(cfg, 1);
  CHECK_THROWS_AS(extract_feature_maps(random_image(31, 64, 3, 1), cfg, params), DimensionError);
  ImageTensor bad{40, 40, 3, Matrix::Zero(3, 1600)};
  bad.values(1, 7) = std::nan("");
  CHECK_THROWS_AS(extract_feature_maps(bad, cfg, params), ValidationError);
  CHECK_THROWS_AS(extract_feature_maps(random_image(40, 40, 1, 1), cfg, params), DimensionError);
}

TEST_CASE("tap gradients match finite differences for every parameter group") {
  BackboneConfig cfg;
  cfg.in_channels = 1;
  cfg.channels = {3, 4, 4};
  cfg.strides = {2, 1, 2};
  cfg.shallow_tap = 1;
  cfg.deep_tap = 3;
  auto params = BackboneParams::init(cfg, 11);
  std::mt19937_64 rng(2);
  for (auto& b : params.biases) b.value = lmtest::random_matrix(static_cast<int>(b.value.rows()), 1, rng, -0.1, 0.1);
  const ImageTensor img = random_image(32, 36, 1, 4);

  std::vector<Matrix> inputs;
  for (const auto& k : params.kernels) inputs.push_back(k.value);
  for (const auto& b : params.biases) inputs.push_back(b.value);
  const std::size_t stages = params.kernels.size();
  for (int tap : {0, 1}) {
    auto fn = [&, tap](ad::Tape& t, const std::vector<ad::Var>& v) {
      std::vector<ad::Var> k(v.begin(), v.begin() + static_cast<long>(stages));
      std::vector<ad::Var> b(v.begin() + static_cast<long>(stages), v.end());
      const auto maps = extract_feature_maps(t, img, cfg, k, b);
      const ad::Var x = tap == 0 ? maps.shallow.values : maps.deep.values;
      Matrix w(x.rows(), x.cols());
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = std::sin(0.37 * static_cast<double>(i));
      return ad::sum(ad::cmul(x, t.constant(w)));
    };
    CHECK(lmtest::gradcheck(fn, inputs) < 1e-4);
  }
}
