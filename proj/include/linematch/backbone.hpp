#pragma once

#include <cstdint>
#include <vector>

#include "linematch/autodiff.hpp"
#include "linematch/image.hpp"

namespace linematch {

/// Stack of 3x3 same-padded convolutions with ReLU. Stage s downsamples by
/// strides[s]; the shallow and deep outputs are taken after the 1-based
/// stages `shallow_tap` and `deep_tap`. Stages past the deep tap are not built.
struct BackboneConfig {
  int in_channels = 3;
  std::vector<int> channels{16, 32, 64, 64};
  std::vector<int> strides{2, 2, 2, 2};
  int shallow_tap = 2;
  int deep_tap = 4;

  int stride_after(int stage) const;
  int shallow_stride() const { return stride_after(shallow_tap); }
  int deep_stride() const { return stride_after(deep_tap); }
  int shallow_channels() const { return channels.at(shallow_tap - 1); }
  int deep_channels() const { return channels.at(deep_tap - 1); }
  void validate() const;
};

/// One kernel (cout x cin*9) and bias (cout x 1) per stage.
struct BackboneParams {
  std::vector<Parameter> kernels;
  std::vector<Parameter> biases;

  static BackboneParams init(const BackboneConfig& config, std::uint64_t seed);
  std::size_t parameter_count() const;
};

/// Feature map stored as channels x (height*width).
struct FeatureMap {
  Matrix values;
  int height = 0;
  int width = 0;
  int stride = 1;
  int channels() const { return static_cast<int>(values.rows()); }
};

struct FeatureMapVar {
  ad::Var values;
  int height = 0;
  int width = 0;
  int stride = 1;
};

struct MultiScaleFeatureMaps {
  FeatureMap shallow;
  FeatureMap deep;
};

struct MultiScaleFeatureVars {
  FeatureMapVar shallow;
  FeatureMapVar deep;
};

/// 3x3 convolution, zero padding 1, output ceil(H/stride) x ceil(W/stride).
ad::Var conv3x3(ad::Var input, int height, int width, ad::Var kernel, ad::Var bias, int stride);

/// Records the backbone on `tape`. `kernels`/`biases` are the bound parameters.
MultiScaleFeatureVars extract_feature_maps(ad::Tape& tape, const ImageTensor& image,
                                           const BackboneConfig& config,
                                           std::span<const ad::Var> kernels,
                                           std::span<const ad::Var> biases);

/// Convenience wrapper: binds `params` as differentiable leaves on `tape`.
MultiScaleFeatureVars extract_feature_maps(ad::Tape& tape, const ImageTensor& image,
                                           const BackboneConfig& config,
                                           const BackboneParams& params);

/// Plain forward pass without gradient bookkeeping.
MultiScaleFeatureMaps extract_feature_maps(const ImageTensor& image, const BackboneConfig& config,
                                           const BackboneParams& params);

}  // namespace linematch
