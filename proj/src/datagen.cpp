#include "linematch/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <Eigen/Dense>
#include <opencv2/imgproc.hpp>

#include "linematch/errors.hpp"

namespace linematch {

void ImagePairRecord::validate() const {
  const int wa = image_a.empty() ? std::numeric_limits<int>::max() : image_a.cols;
  const int ha = image_a.empty() ? std::numeric_limits<int>::max() : image_a.rows;
  const int wb = image_b.empty() ? std::numeric_limits<int>::max() : image_b.cols;
  const int hb = image_b.empty() ? std::numeric_limits<int>::max() : image_b.rows;
  for (std::size_t i = 0; i < lines_a.size(); ++i) lines_a[i].validate(wa, ha);
  for (std::size_t j = 0; j < lines_b.size(); ++j) lines_b[j].validate(wb, hb);
  gt.validate(static_cast<int>(lines_a.size()), static_cast<int>(lines_b.size()));
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Homography translation(double tx, double ty) {
  Homography h = Homography::Identity();
  h(0, 2) = tx;
  h(1, 2) = ty;
  return h;
}

Homography random_warp(std::mt19937_64& rng, const SyntheticConfig& config) {
  const double c = (config.image_size - 1) / 2.0;
  for (;;) {
    const double deg = uniform(rng, -config.max_rotation_deg, config.max_rotation_deg);
    const double s = uniform(rng, config.min_scale, config.max_scale);
    Homography core = similarity_about(0.0, 0.0, deg, s);
    core(2, 0) = uniform(rng, -config.max_perspective, config.max_perspective);
    core(2, 1) = uniform(rng, -config.max_perspective, config.max_perspective);
    const Homography h = translation(c + uniform(rng, -config.max_translation, config.max_translation),
                                     c + uniform(rng, -config.max_translation, config.max_translation)) *
                         core * translation(-c, -c);
    // Near-singular warps are resampled.
    if (std::abs(h.topLeftCorner<2, 2>().determinant()) > 0.25 && std::abs(h.determinant()) > 1e-6) return h;
  }
}

// Parameter interval of the world segment w0 + t (w1 - w0), t in [0, 1], that lands
// inside the view of homography `h`.
std::optional<std::pair<double, double>> visible_interval(const LineSegment& world, const Homography& h, int size) {
  const Eigen::Vector3d q0 = h * world.p0.homogeneous(), q1 = h * world.p1.homogeneous();
  if (q0.z() <= 0.0 || q1.z() <= 0.0) return std::nullopt;
  const auto clipped = clip_segment(apply_homography(h, world), size, size);
  if (!clipped) return std::nullopt;
  const Homography inv = h.inverse();
  const Eigen::Vector2d d = world.p1 - world.p0;
  const double len2 = d.squaredNorm();
  auto param = [&](const Eigen::Vector2d& p) {
    return std::clamp((apply_homography(inv, p) - world.p0).dot(d) / len2, 0.0, 1.0);
  };
  double t0 = param(clipped->p0), t1 = param(clipped->p1);
  if (t0 > t1) std::swap(t0, t1);
  return std::make_pair(t0, t1);
}

LineSegment world_sub(const LineSegment& world, double t0, double t1) {
  const Eigen::Vector2d d = world.p1 - world.p0;
  return {world.p0 + t0 * d, world.p0 + t1 * d};
}

// Clip into the view and make sure round-off in the homography never leaves the box.
LineSegment into_view(const LineSegment& s, int size) {
  auto c = clip_segment(s, size, size);
  return c ? *c : s;
}

cv::Mat to_8bit(const cv::Mat& f, double noise_sigma, std::mt19937_64& rng) {
  cv::Mat noisy = f.clone();
  if (noise_sigma > 0.0) {
    std::normal_distribution<float> dist(0.0f, static_cast<float>(noise_sigma));
    for (int y = 0; y < noisy.rows; ++y) {
      auto* row = noisy.ptr<float>(y);
      for (int x = 0; x < noisy.cols * noisy.channels(); ++x) row[x] += dist(rng);
    }
  }
  cv::Mat out;
  noisy.convertTo(out, CV_8UC3, 255.0);
  return out;
}

double view_overlap(const Homography& h_ab, int size) {
  int inside = 0, total = 0;
  constexpr int kGrid = 16;
  for (int gy = 0; gy < kGrid; ++gy)
    for (int gx = 0; gx < kGrid; ++gx) {
      const Eigen::Vector2d p((size - 1) * gx / (kGrid - 1.0), (size - 1) * gy / (kGrid - 1.0));
      const Eigen::Vector3d q = h_ab * p.homogeneous();
      ++total;
      if (q.z() <= 0.0) continue;
      const Eigen::Vector2d r = q.hnormalized();
      if (r.x() >= 0 && r.y() >= 0 && r.x() <= size - 1 && r.y() <= size - 1) ++inside;
    }
  return static_cast<double>(inside) / total;
}

// Builds both views of `world` (float BGR in [0,1]) and the exact ground truth for
// the world-frame `world_lines`.
ImagePairRecord make_pair(const cv::Mat& world, const std::vector<LineSegment>& world_lines, std::mt19937_64& rng,
                          const SyntheticConfig& config) {
  const int size = config.image_size;
  const double offset_x = (world.cols - size) / 2.0, offset_y = (world.rows - size) / 2.0;
  const Homography h_a = translation(-offset_x, -offset_y);
  const Homography h_b = config.identity ? h_a : Homography(random_warp(rng, config) * h_a);

  cv::Mat view_a, view_b;
  auto to_cv = [](const Homography& h) {
    cv::Mat m(3, 3, CV_64F);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) m.at<double>(r, c) = h(r, c);
    return m;
  };
  cv::warpPerspective(world, view_a, to_cv(h_a), cv::Size(size, size), cv::INTER_LINEAR, cv::BORDER_REFLECT);
  cv::warpPerspective(world, view_b, to_cv(h_b), cv::Size(size, size), cv::INTER_LINEAR, cv::BORDER_REFLECT);

  struct Pair {
    LineSegment a, b;
  };
  std::vector<Pair> covisible;
  std::vector<LineSegment> only_a, only_b;
  const double min_len = config.min_line_length;
  for (const auto& w : world_lines) {
    const auto ia = visible_interval(w, h_a, size);
    const auto ib = visible_interval(w, h_b, size);
    std::optional<LineSegment> full_a, full_b;
    if (ia) full_a = into_view(apply_homography(h_a, world_sub(w, ia->first, ia->second)), size);
    if (ib) full_b = into_view(apply_homography(h_b, world_sub(w, ib->first, ib->second)), size);
    if (ia && ib) {
      const double t0 = std::max(ia->first, ib->first), t1 = std::min(ia->second, ib->second);
      if (t1 > t0) {
        const LineSegment sub = world_sub(w, t0, t1);
        const LineSegment sa = into_view(apply_homography(h_a, sub), size);
        const LineSegment sb = into_view(apply_homography(h_b, sub), size);
        if (sa.length() >= min_len && sb.length() >= min_len) {
          covisible.push_back({sa, sb});
          continue;
        }
      }
    }
    if (full_a && full_a->length() >= min_len) only_a.push_back(*full_a);
    if (full_b && full_b->length() >= min_len) only_b.push_back(*full_b);
  }

  // Decide which co-visible pairs lose one side to create unmatched lines.
  const int n_cov = static_cast<int>(covisible.size());
  std::vector<char> keep_a(n_cov, 1), keep_b(n_cov, 1);
  double target_ratio = std::numeric_limits<double>::quiet_NaN();
  if (config.drop_prob_a >= 0.0 || config.drop_prob_b >= 0.0) {
    const double pa = std::max(0.0, config.drop_prob_a), pb = std::max(0.0, config.drop_prob_b);
    for (int k = 0; k < n_cov; ++k) {
      keep_a[k] = uniform(rng, 0.0, 1.0) >= pa;
      keep_b[k] = uniform(rng, 0.0, 1.0) >= pb;
    }
    auto drop = [&](std::vector<LineSegment>& v, double p) {
      std::vector<LineSegment> kept;
      for (auto& s : v)
        if (uniform(rng, 0.0, 1.0) >= p) kept.push_back(s);
      v = std::move(kept);
    };
    drop(only_a, pa);
    drop(only_b, pb);
  } else {
    target_ratio = uniform(rng, config.ratio_min, config.ratio_max);
    const double u = static_cast<double>(only_a.size() + only_b.size());
    const int k = std::clamp(static_cast<int>(std::lround((n_cov - target_ratio * u) / (1.0 + target_ratio))), 0, n_cov);
    std::vector<int> order(n_cov);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (int t = 0; t < k; ++t) {
      if (uniform(rng, 0.0, 1.0) < 0.5)
        keep_a[order[t]] = 0;
      else
        keep_b[order[t]] = 0;
    }
  }

  ImagePairRecord rec;
  std::vector<std::pair<int, int>> pairs;
  for (int k = 0; k < n_cov; ++k) {
    const bool ka = keep_a[k], kb = keep_b[k];
    LineSegment b = covisible[k].b;
    if (ka && kb && uniform(rng, 0.0, 1.0) < config.fragment_prob) {
      const double s0 = uniform(rng, 0.0, 0.15), s1 = uniform(rng, 0.85, 1.0);
      const LineSegment frag{b.p0 + s0 * (b.p1 - b.p0), b.p0 + s1 * (b.p1 - b.p0)};
      if (frag.length() >= min_len) b = frag;
    }
    if (ka) rec.lines_a.push_back(covisible[k].a);
    if (kb) rec.lines_b.push_back(b);
    if (ka && kb)
      pairs.emplace_back(static_cast<int>(rec.lines_a.size()) - 1, static_cast<int>(rec.lines_b.size()) - 1);
  }
  for (auto& s : only_a) rec.lines_a.push_back(s);
  for (auto& s : only_b) rec.lines_b.push_back(s);

  if (config.shuffle) {
    std::vector<int> pa(rec.lines_a.size()), pb(rec.lines_b.size());
    std::iota(pa.begin(), pa.end(), 0);
    std::iota(pb.begin(), pb.end(), 0);
    std::shuffle(pa.begin(), pa.end(), rng);
    std::shuffle(pb.begin(), pb.end(), rng);
    // pa[new] = old
    std::vector<int> inv_a(pa.size()), inv_b(pb.size());
    std::vector<LineSegment> la(pa.size()), lb(pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
      la[i] = rec.lines_a[pa[i]];
      inv_a[pa[i]] = static_cast<int>(i);
    }
    for (std::size_t j = 0; j < pb.size(); ++j) {
      lb[j] = rec.lines_b[pb[j]];
      inv_b[pb[j]] = static_cast<int>(j);
    }
    rec.lines_a = std::move(la);
    rec.lines_b = std::move(lb);
    for (auto& [i, j] : pairs) {
      i = inv_a[i];
      j = inv_b[j];
    }
  }
  rec.gt = MatchGroundTruth::from_pairs(std::move(pairs), static_cast<int>(rec.lines_a.size()),
                                        static_cast<int>(rec.lines_b.size()));

  rec.image_a = to_8bit(view_a, config.noise_sigma, rng);
  rec.image_b = to_8bit(view_b, config.noise_sigma, rng);

  const Homography h_ab = h_b * h_a.inverse();
  std::vector<double> hv;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) hv.push_back(h_ab(r, c) / h_ab(2, 2));
  rec.meta["homography_ab"] = hv;
  rec.meta["view_overlap"] = view_overlap(h_ab, size);
  if (!std::isnan(target_ratio)) rec.meta["target_ratio"] = target_ratio;
  return rec;
}

cv::Vec3f random_colour(std::mt19937_64& rng) {
  return {static_cast<float>(uniform(rng, 0.0, 1.0)), static_cast<float>(uniform(rng, 0.0, 1.0)),
          static_cast<float>(uniform(rng, 0.0, 1.0))};
}

}  // namespace

ImagePairRecord generate_synthetic_pair(std::uint64_t seed, const SyntheticConfig& config) {
  if (config.image_size < 32) throw ValidationError("synthetic image size must be at least 32");
  if (config.grid < 1) throw ValidationError("synthetic grid must be >= 1");
  std::mt19937_64 rng(seed);
  const int world_size = static_cast<int>(std::lround(config.image_size * config.world_scale));

  cv::Mat coarse(3, 3, CV_32FC3);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) coarse.at<cv::Vec3f>(y, x) = random_colour(rng);
  cv::Mat world;
  cv::resize(coarse, world, cv::Size(world_size, world_size), 0, 0, cv::INTER_CUBIC);

  constexpr int kShift = 4;  // polygon vertices on a 1/16 px grid
  constexpr double kSub = 1 << kShift;
  std::vector<LineSegment> world_lines;
  const double cell = static_cast<double>(world_size) / config.grid;
  for (int gy = 0; gy < config.grid; ++gy)
    for (int gx = 0; gx < config.grid; ++gx) {
      const double cx = (gx + 0.5) * cell + uniform(rng, -0.08, 0.08) * cell;
      const double cy = (gy + 0.5) * cell + uniform(rng, -0.08, 0.08) * cell;
      const int k = std::uniform_int_distribution<int>(3, 5)(rng);
      std::vector<double> angles(k);
      const double start = uniform(rng, 0.0, 2.0 * M_PI);
      for (int v = 0; v < k; ++v) angles[v] = start + 2.0 * M_PI * (v + uniform(rng, -0.25, 0.25)) / k;
      std::vector<cv::Point> poly;
      std::vector<Eigen::Vector2d> verts;
      for (int v = 0; v < k; ++v) {
        const double r = uniform(rng, 0.28, 0.45) * cell;
        const double px = std::round((cx + r * std::cos(angles[v])) * kSub) / kSub;
        const double py = std::round((cy + r * std::sin(angles[v])) * kSub) / kSub;
        verts.emplace_back(px, py);
        poly.emplace_back(static_cast<int>(px * kSub), static_cast<int>(py * kSub));
      }
      const cv::Vec3f bg = world.at<cv::Vec3f>(std::clamp(static_cast<int>(cy), 0, world_size - 1),
                                               std::clamp(static_cast<int>(cx), 0, world_size - 1));
      cv::Vec3f colour = random_colour(rng);
      for (int attempt = 0; attempt < 16 && cv::norm(colour - bg, cv::NORM_L1) < 0.6; ++attempt)
        colour = random_colour(rng);
      cv::fillPoly(world, std::vector<std::vector<cv::Point>>{poly}, cv::Scalar(colour[0], colour[1], colour[2]),
                   cv::LINE_AA, kShift);
      for (int v = 0; v < k; ++v) {
        LineSegment edge{verts[v], verts[(v + 1) % k]};
        if (edge.length() >= config.min_line_length) world_lines.push_back(edge);
      }
    }

  ImagePairRecord rec = make_pair(world, world_lines, rng, config);
  rec.meta["generator"] = "synthetic";
  rec.meta["seed"] = seed;
  return rec;
}

ImagePairRecord generate_warped_pair(const cv::Mat& base_image, const std::vector<LineSegment>& base_lines,
                                     std::uint64_t seed, const SyntheticConfig& config) {
  if (base_image.cols < config.image_size || base_image.rows < config.image_size)
    throw DimensionError("base image smaller than the requested view size");
  std::mt19937_64 rng(seed);
  cv::Mat world;
  base_image.convertTo(world, CV_32FC3, base_image.depth() == CV_8U ? 1.0 / 255.0 : 1.0);
  if (world.channels() == 1) cv::cvtColor(world, world, cv::COLOR_GRAY2BGR);
  ImagePairRecord rec = make_pair(world, base_lines, rng, config);
  rec.meta["generator"] = "warped";
  rec.meta["seed"] = seed;
  return rec;
}

namespace {

std::vector<int> warp_lines(const std::vector<LineSegment>& in, const Homography& h, cv::Size size,
                            double min_length, std::vector<LineSegment>& out) {
  std::vector<int> remap(in.size(), -1);
  for (std::size_t i = 0; i < in.size(); ++i) {
    const Eigen::Vector3d q0 = h * in[i].p0.homogeneous(), q1 = h * in[i].p1.homogeneous();
    if (q0.z() <= 0.0 || q1.z() <= 0.0) continue;
    const auto c = clip_segment(apply_homography(h, in[i]), size.width, size.height);
    if (!c || c->length() < min_length) continue;
    remap[i] = static_cast<int>(out.size());
    out.push_back(*c);
  }
  return remap;
}

cv::Mat warp_image(const cv::Mat& img, const Homography& h, cv::Size size) {
  if (img.empty()) return img;
  if (h.isIdentity(0.0) && img.size() == size) return img.clone();
  cv::Mat m(3, 3, CV_64F), out;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m.at<double>(r, c) = h(r, c);
  cv::warpPerspective(img, out, m, size, cv::INTER_LINEAR, cv::BORDER_REFLECT);
  return out;
}

}  // namespace

ImagePairRecord warp_record(const ImagePairRecord& record, const Homography& ha, const Homography& hb,
                            cv::Size size_a, cv::Size size_b, double min_length) {
  ImagePairRecord out;
  out.id = record.id;
  out.image_a_path = record.image_a_path;
  out.image_b_path = record.image_b_path;
  out.meta = record.meta;
  out.image_a = warp_image(record.image_a, ha, size_a);
  out.image_b = warp_image(record.image_b, hb, size_b);
  const auto ra = warp_lines(record.lines_a, ha, size_a, min_length, out.lines_a);
  const auto rb = warp_lines(record.lines_b, hb, size_b, min_length, out.lines_b);
  std::vector<std::pair<int, int>> pairs;
  for (const auto& [i, j] : record.gt.pairs)
    if (ra[i] >= 0 && rb[j] >= 0) pairs.emplace_back(ra[i], rb[j]);
  out.gt = MatchGroundTruth::from_pairs(std::move(pairs), static_cast<int>(out.lines_a.size()),
                                        static_cast<int>(out.lines_b.size()));
  return out;
}

double match_ratio(const MatchGroundTruth& gt) {
  const double non = static_cast<double>(gt.unmatched_a.size() + gt.unmatched_b.size());
  if (non == 0.0) return std::numeric_limits<double>::infinity();
  return static_cast<double>(gt.pairs.size()) / non;
}

FilterDecision filter_pairs(const ImagePairRecord& record, const FilterConfig& config) {
  const int matches = static_cast<int>(record.gt.pairs.size());
  if (matches < std::max(1, config.min_matches)) return {false, "too few matches"};
  if (record.meta.contains("view_overlap") && record.meta["view_overlap"].get<double>() > config.max_overlap)
    return {false, "view overlap too large"};
  const double ratio = match_ratio(record.gt);
  if (ratio < config.ratio_min || ratio > config.ratio_max) return {false, "match ratio out of bounds"};
  return {true, {}};
}

std::vector<ImagePairRecord> generate_dataset(int count, std::uint64_t master_seed, const SyntheticConfig& config,
                                              const FilterConfig& filter, GenerationSummary* summary) {
  std::vector<ImagePairRecord> out;
  GenerationSummary s;
  const int max_attempts = 20 * count + 20;
  for (int attempt = 0; static_cast<int>(out.size()) < count && attempt < max_attempts; ++attempt) {
    ImagePairRecord rec = generate_synthetic_pair(splitmix64(master_seed + static_cast<std::uint64_t>(attempt)), config);
    ++s.attempted;
    if (!filter_pairs(rec, filter).keep) {
      ++s.discarded;
      continue;
    }
    char id[16];
    std::snprintf(id, sizeof(id), "%06zu", out.size());
    rec.id = id;
    out.push_back(std::move(rec));
    ++s.kept;
  }
  if (summary) *summary = s;
  return out;
}

}  // namespace linematch
