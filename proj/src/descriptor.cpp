#include "linematch/descriptor.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <string>

#include <Eigen/Sparse>

#include "linematch/errors.hpp"

namespace linematch {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Triplet = Eigen::Triplet<double>;

void GLPoolConfig::validate() const {
  if (width < 1 || width % 2 == 0) throw ValidationError("GLpool width must be odd and >= 1");
  if (groups < 1) throw ValidationError("GLpool group count must be >= 1");
  if (sigma < 0.0 || !std::isfinite(sigma)) throw ValidationError("GLpool sigma must be finite");
}

Vector gaussian_weights(int n, double sigma) {
  if (n < 1 || n % 2 == 0) throw ValidationError("gaussian_weights: n must be odd and >= 1");
  if (!(sigma > 0.0)) throw ValidationError("gaussian_weights: sigma must be positive");
  Vector w(n);
  const double centre = (n - 1) / 2.0;
  for (int i = 0; i < n; ++i) {
    const double d = i - centre;
    w(i) = std::exp(-d * d / (2.0 * sigma * sigma));
  }
  return w / w.sum();
}

int samples_along(double length_px, int stride) {
  return std::max(1, static_cast<int>(std::lround(length_px / stride)));
}

namespace {

struct SamplingPlan {
  int samples = 0;
  std::vector<int> group_sizes;  // non-empty groups only
};

// Appends, for each along-line sample of `segment`, one sparse row holding the
// across-width Gaussian weights spread over the bilinear corners.
SamplingPlan plan_segment(const LineSegment& segment, int height, int width, int stride,
                          const GLPoolConfig& config, int row_offset, std::vector<Triplet>& triplets) {
  const Eigen::Vector2d q0 = segment.p0 / stride, q1 = segment.p1 / stride;
  const double len = (q1 - q0).norm();
  if (!(len > 1e-9) || !std::isfinite(len)) throw ValidationError("degenerate segment after stride scaling");

  const int n = config.point_sampling ? 1 : config.width;
  const int w = config.point_sampling ? 1 : config.groups;
  const Vector across = config.point_sampling ? Vector::Ones(1) : gaussian_weights(n, config.effective_sigma());
  const int m = samples_along(segment.length(), stride);

  const Eigen::Vector2d dir = (q1 - q0) / len;
  const Eigen::Vector2d normal(-dir.y(), dir.x());
  const double centre = (n - 1) / 2.0;

  for (int k = 0; k < m; ++k) {
    const Eigen::Vector2d base = q0 + (k + 0.5) / m * (q1 - q0);
    for (int i = 0; i < n; ++i) {
      const Eigen::Vector2d p = base + (i - centre) * normal;
      // Border clamping.
      const double u = std::clamp(p.x(), 0.0, width - 1.0);
      const double v = std::clamp(p.y(), 0.0, height - 1.0);
      const int x0 = std::min(static_cast<int>(std::floor(u)), width - 1);
      const int y0 = std::min(static_cast<int>(std::floor(v)), height - 1);
      const int x1 = std::min(x0 + 1, width - 1), y1 = std::min(y0 + 1, height - 1);
      const double fx = u - x0, fy = v - y0;
      const double wi = across(i);
      const int row = row_offset + k;
      triplets.emplace_back(row, y0 * width + x0, wi * (1 - fx) * (1 - fy));
      triplets.emplace_back(row, y0 * width + x1, wi * fx * (1 - fy));
      triplets.emplace_back(row, y1 * width + x0, wi * (1 - fx) * fy);
      triplets.emplace_back(row, y1 * width + x1, wi * fx * fy);
    }
  }

  SamplingPlan plan;
  plan.samples = m;
  const int base = m / w, extra = m % w;
  for (int g = 0; g < w; ++g) {
    const int size = base + (g < extra ? 1 : 0);
    if (size > 0) plan.group_sizes.push_back(size);
  }
  return plan;
}

// Max within each group of consecutive columns, then the mean over groups.
// Returns the pooled column and records the arg-max columns.
void group_max_mean(const Matrix& samples, int col_offset, const SamplingPlan& plan,
                    Eigen::Ref<Vector> out, std::vector<int>* argmax) {
  const Eigen::Index c = samples.rows();
  out.setZero();
  int start = col_offset;
  const double inv = 1.0 / static_cast<double>(plan.group_sizes.size());
  for (int size : plan.group_sizes) {
    for (Eigen::Index ch = 0; ch < c; ++ch) {
      Eigen::Index best = start;
      double best_v = samples(ch, start);
      for (int k = start + 1; k < start + size; ++k)
        if (samples(ch, k) > best_v) {
          best_v = samples(ch, k);
          best = k;
        }
      out(ch) += best_v * inv;
      if (argmax) argmax->push_back(static_cast<int>(best));
    }
    start += size;
  }
}

}  // namespace

Vector glpool(const FeatureMap& map, const LineSegment& segment, const GLPoolConfig& config) {
  config.validate();
  if (map.values.cols() != static_cast<Eigen::Index>(map.height) * map.width)
    throw DimensionError("feature map values do not match its shape");
  std::vector<Triplet> triplets;
  const SamplingPlan plan = plan_segment(segment, map.height, map.width, map.stride, config, 0, triplets);
  SparseMatrix k(plan.samples, static_cast<Eigen::Index>(map.height) * map.width);
  k.setFromTriplets(triplets.begin(), triplets.end());
  const Matrix samples = map.values * k.transpose();
  Vector out(map.values.rows());
  group_max_mean(samples, 0, plan, out, nullptr);
  return out;
}

ad::Var glpool(const FeatureMapVar& map, std::span<const LineSegment> segments, const GLPoolConfig& config) {
  config.validate();
  const Matrix& x = map.values.value();
  if (x.cols() != static_cast<Eigen::Index>(map.height) * map.width)
    throw DimensionError("feature map values do not match its shape");
  std::vector<Triplet> triplets;
  std::vector<SamplingPlan> plans;
  plans.reserve(segments.size());
  int total = 0;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    try {
      plans.push_back(plan_segment(segments[s], map.height, map.width, map.stride, config, total, triplets));
    } catch (const ValidationError& e) {
      throw ValidationError("segment " + std::to_string(s) + ": " + e.what());
    }
    total += plans.back().samples;
  }
  auto kernel = std::make_shared<SparseMatrix>(total, x.cols());
  kernel->setFromTriplets(triplets.begin(), triplets.end());

  ad::Tape* tape = map.values.tape();
  // C x total samples, linear in the map.
  const int ix = map.values.id();
  ad::Var samples = tape->push(x * kernel->transpose(), {map.values}, [ix, kernel](ad::Tape& t, const Matrix& g) {
    t.accumulate(ix, g * (*kernel));
  });

  const Eigen::Index channels = x.rows();
  Matrix pooled(static_cast<Eigen::Index>(segments.size()), channels);
  auto argmax = std::make_shared<std::vector<int>>();
  auto weights = std::make_shared<std::vector<double>>();
  int offset = 0;
  Vector col(channels);
  for (std::size_t s = 0; s < plans.size(); ++s) {
    group_max_mean(samples.value(), offset, plans[s], col, argmax.get());
    pooled.row(static_cast<Eigen::Index>(s)) = col.transpose();
    weights->push_back(1.0 / static_cast<double>(plans[s].group_sizes.size()));
    offset += plans[s].samples;
  }
  auto groups = std::make_shared<std::vector<int>>();
  for (const auto& p : plans) groups->push_back(static_cast<int>(p.group_sizes.size()));

  const int is = samples.id();
  return tape->push(std::move(pooled), {samples}, [is, channels, argmax, weights, groups](ad::Tape& t, const Matrix& g) {
    Matrix& buf = t.grad_buffer(is);
    std::size_t k = 0;
    for (std::size_t s = 0; s < groups->size(); ++s)
      for (int grp = 0; grp < (*groups)[s]; ++grp)
        for (Eigen::Index ch = 0; ch < channels; ++ch, ++k)
          buf(ch, (*argmax)[k]) += g(static_cast<Eigen::Index>(s), ch) * (*weights)[s];
  });
}

LineDescriptors describe_lines(const MultiScaleFeatureVars& maps, std::span<const LineSegment> segments,
                               const GLPoolConfig& config) {
  if (segments.empty()) throw ValidationError("describe_lines: no segments");
  LineDescriptors d;
  d.shallow = ad::normalize_rows(glpool(maps.shallow, segments, config));
  d.deep = ad::normalize_rows(glpool(maps.deep, segments, config));
  d.combined = ad::normalize_rows(ad::hcat(d.shallow, d.deep));
  return d;
}

Matrix describe_lines(const MultiScaleFeatureMaps& maps, std::span<const LineSegment> segments,
                      const GLPoolConfig& config) {
  ad::Tape tape;
  MultiScaleFeatureVars vars{
      {tape.constant(maps.shallow.values), maps.shallow.height, maps.shallow.width, maps.shallow.stride},
      {tape.constant(maps.deep.values), maps.deep.height, maps.deep.width, maps.deep.stride}};
  return describe_lines(vars, segments, config).combined.value();
}

std::pair<std::vector<int>, std::vector<int>> exclude_non_matches(const Matrix& fa, const Matrix& fb,
                                                                  double threshold) {
  std::vector<int> keep_a, keep_b;
  if (fa.rows() == 0 || fb.rows() == 0) return {keep_a, keep_b};
  if (fa.cols() != fb.cols()) throw DimensionError("exclude_non_matches: descriptor widths differ");
  const Matrix cosines = fa * fb.transpose();
  for (Eigen::Index i = 0; i < cosines.rows(); ++i)
    if (cosines.row(i).maxCoeff() >= threshold) keep_a.push_back(static_cast<int>(i));
  for (Eigen::Index j = 0; j < cosines.cols(); ++j)
    if (cosines.col(j).maxCoeff() >= threshold) keep_b.push_back(static_cast<int>(j));
  return {keep_a, keep_b};
}

DescriptorSet append_dustbin(const Matrix& descriptors, std::vector<int> kept_indices, const Matrix& dustbin) {
  if (dustbin.rows() != 1 || dustbin.cols() != descriptors.cols())
    throw DimensionError("dustbin must be a 1 x d row matching the descriptor width");
  if (!dustbin.allFinite()) throw ValidationError("dustbin descriptor is not finite");
  if (static_cast<Eigen::Index>(kept_indices.size()) != descriptors.rows())
    throw DimensionError("kept indices do not match the descriptor rows");
  DescriptorSet set;
  set.descriptors.resize(descriptors.rows() + 1, descriptors.cols());
  set.descriptors << descriptors, dustbin;
  set.kept_indices = std::move(kept_indices);
  return set;
}

ad::Var append_dustbin(ad::Var kept, ad::Var dustbin) {
  if (!dustbin.value().allFinite()) throw ValidationError("dustbin descriptor is not finite");
  if (kept.rows() == 0) {
    // vcat of an empty block: the dustbin alone.
    return ad::add_scalar(dustbin, 0.0);
  }
  return ad::vcat(kept, dustbin);
}

Parameter init_dustbin(int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix u(1, dim);
  for (int i = 0; i < dim; ++i) u(0, i) = dist(rng);
  u /= u.norm();
  return {"dustbin", std::move(u)};
}

}  // namespace linematch
