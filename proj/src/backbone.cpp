#include "linematch/backbone.hpp"

#include <cmath>
#include <random>
#include <string>

#include "linematch/errors.hpp"

namespace linematch {

int BackboneConfig::stride_after(int stage) const {
  if (stage < 1 || stage > static_cast<int>(strides.size()))
    throw ValidationError("backbone stage " + std::to_string(stage) + " does not exist");
  int s = 1;
  for (int i = 0; i < stage; ++i) s *= strides[i];
  return s;
}

void BackboneConfig::validate() const {
  if (channels.empty() || channels.size() != strides.size())
    throw ValidationError("backbone channels and strides must be non-empty and equally long");
  if (in_channels != 1 && in_channels != 3) throw ValidationError("backbone input must have 1 or 3 channels");
  for (int c : channels)
    if (c < 1) throw ValidationError("backbone channel counts must be positive");
  for (int s : strides)
    if (s != 1 && s != 2) throw ValidationError("backbone strides must be 1 or 2");
  if (shallow_tap < 1 || deep_tap <= shallow_tap || deep_tap > static_cast<int>(channels.size()))
    throw ValidationError("backbone taps must satisfy 1 <= shallow_tap < deep_tap <= stages");
}

BackboneParams BackboneParams::init(const BackboneConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  BackboneParams p;
  int cin = config.in_channels;
  for (int s = 0; s < config.deep_tap; ++s) {
    const int cout = config.channels[s];
    const int fan_in = cin * 9;
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    Matrix k(cout, fan_in);
    for (Eigen::Index i = 0; i < k.size(); ++i) k.data()[i] = dist(rng);
    p.kernels.push_back({"backbone.conv" + std::to_string(s + 1) + ".weight", std::move(k)});
    p.biases.push_back({"backbone.conv" + std::to_string(s + 1) + ".bias", Matrix::Zero(cout, 1)});
    cin = cout;
  }
  return p;
}

std::size_t BackboneParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& k : kernels) n += static_cast<std::size_t>(k.value.size());
  for (const auto& b : biases) n += static_cast<std::size_t>(b.value.size());
  return n;
}

namespace {

int ceil_div(int a, int b) { return (a + b - 1) / b; }

// Rows of `cols` are indexed (channel, ky, kx); columns are output pixels.
Matrix im2col(const Matrix& x, int h, int w, int stride) {
  const int cin = static_cast<int>(x.rows());
  const int ho = ceil_div(h, stride), wo = ceil_div(w, stride);
  Matrix cols = Matrix::Zero(cin * 9, static_cast<Eigen::Index>(ho) * wo);
  for (int c = 0; c < cin; ++c)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const Eigen::Index r = c * 9 + ky * 3 + kx;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride + ky - 1;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride + kx - 1;
            if (ix < 0 || ix >= w) continue;
            cols(r, static_cast<Eigen::Index>(oy) * wo + ox) = x(c, static_cast<Eigen::Index>(iy) * w + ix);
          }
        }
      }
  return cols;
}

void col2im_add(const Matrix& cols, int h, int w, int stride, Matrix& dx) {
  const int cin = static_cast<int>(dx.rows());
  const int ho = ceil_div(h, stride), wo = ceil_div(w, stride);
  for (int c = 0; c < cin; ++c)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const Eigen::Index r = c * 9 + ky * 3 + kx;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride + ky - 1;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride + kx - 1;
            if (ix < 0 || ix >= w) continue;
            dx(c, static_cast<Eigen::Index>(iy) * w + ix) += cols(r, static_cast<Eigen::Index>(oy) * wo + ox);
          }
        }
      }
}

}  // namespace

ad::Var conv3x3(ad::Var input, int height, int width, ad::Var kernel, ad::Var bias, int stride) {
  if (input.cols() != static_cast<Eigen::Index>(height) * width)
    throw DimensionError("conv3x3: input does not hold a " + std::to_string(height) + "x" +
                         std::to_string(width) + " map");
  if (kernel.cols() != input.rows() * 9)
    throw DimensionError("conv3x3: kernel expects " + std::to_string(kernel.cols() / 9) +
                         " input channels, got " + std::to_string(input.rows()));
  if (bias.rows() != kernel.rows() || bias.cols() != 1)
    throw DimensionError("conv3x3: bias must be cout x 1");
  Matrix cols = im2col(input.value(), height, width, stride);
  Matrix out = kernel.value() * cols;
  out.colwise() += bias.value().col(0);
  const int ix = input.id(), ik = kernel.id(), ib = bias.id();
  ad::Tape* tape = input.tape();
  return tape->push(std::move(out), {input, kernel, bias},
                    [ix, ik, ib, height, width, stride, cols = std::move(cols)](ad::Tape& t, const Matrix& g) {
                      if (t.requires_grad(ik)) t.accumulate(ik, g * cols.transpose());
                      if (t.requires_grad(ib)) t.accumulate(ib, g.rowwise().sum());
                      if (t.requires_grad(ix)) {
                        Matrix dcols = t.value(ik).transpose() * g;
                        col2im_add(dcols, height, width, stride, t.grad_buffer(ix));
                      }
                    });
}

MultiScaleFeatureVars extract_feature_maps(ad::Tape& tape, const ImageTensor& image,
                                           const BackboneConfig& config,
                                           std::span<const ad::Var> kernels,
                                           std::span<const ad::Var> biases) {
  image.validate();
  config.validate();
  if (image.channels != config.in_channels)
    throw DimensionError("backbone expects " + std::to_string(config.in_channels) +
                         "-channel images, got " + std::to_string(image.channels));
  if (static_cast<int>(kernels.size()) < config.deep_tap || static_cast<int>(biases.size()) < config.deep_tap)
    throw DimensionError("backbone parameters do not cover the deep tap");

  MultiScaleFeatureVars out;
  ad::Var x = tape.constant(image.values);
  int h = image.height, w = image.width, stride = 1;
  for (int s = 0; s < config.deep_tap; ++s) {
    x = ad::relu(conv3x3(x, h, w, kernels[s], biases[s], config.strides[s]));
    h = ceil_div(h, config.strides[s]);
    w = ceil_div(w, config.strides[s]);
    stride *= config.strides[s];
    if (s + 1 == config.shallow_tap) out.shallow = {x, h, w, stride};
    if (s + 1 == config.deep_tap) out.deep = {x, h, w, stride};
  }
  return out;
}

MultiScaleFeatureVars extract_feature_maps(ad::Tape& tape, const ImageTensor& image,
                                           const BackboneConfig& config,
                                           const BackboneParams& params) {
  std::vector<ad::Var> k, b;
  for (const auto& p : params.kernels) k.push_back(tape.parameter(p));
  for (const auto& p : params.biases) b.push_back(tape.parameter(p));
  return extract_feature_maps(tape, image, config, k, b);
}

MultiScaleFeatureMaps extract_feature_maps(const ImageTensor& image, const BackboneConfig& config,
                                           const BackboneParams& params) {
  ad::Tape tape;
  std::vector<ad::Var> k, b;
  for (const auto& p : params.kernels) k.push_back(tape.constant(p.value));
  for (const auto& p : params.biases) b.push_back(tape.constant(p.value));
  auto vars = extract_feature_maps(tape, image, config, k, b);
  return {{vars.shallow.values.value(), vars.shallow.height, vars.shallow.width, vars.shallow.stride},
          {vars.deep.values.value(), vars.deep.height, vars.deep.width, vars.deep.stride}};
}

}  // namespace linematch
