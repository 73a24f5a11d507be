#pragma once

#include <optional>

#include "dcha/params.hpp"

namespace dcha {

// Truncated residual extractor: stem conv (no max pool) plus bottleneck
// stages, downscaling by exactly 8 in each spatial dimension.
struct BackboneConfig {
  int in_channels = 1;
  int stem_channels = 8;
  int stem_kernel = 3;
  int stem_stride = 2;
  // bottleneck mid-channels per stage = stem_channels * multiplier;
  // stage output channels = 4 * mid (expansion factor 4)
  std::vector<int> stage_channel_multipliers = {1, 1};
  std::vector<int> bottlenecks_per_stage = {1, 1};
  std::vector<int> stage_strides = {2, 2};  // applied by the first bottleneck of the stage
  int feature_channels = 32;

  void validate() const;
  int downscale() const;

  static BackboneConfig paper_scale();  // stem 7x7 c64 s2, stages to C=1024
  static BackboneConfig toy();          // stem 3x3 c8 s2, C=32
};

struct BottleneckParams {
  ConvParam conv1, conv2, conv3;  // 1x1 -> 3x3 -> 1x1
  NormParam norm1, norm2, norm3;
  std::optional<ConvParam> proj;  // 1x1 projection when shape changes
  std::optional<NormParam> proj_norm;
};

struct BackboneParams {
  BackboneConfig cfg;
  ConvParam stem;
  NormParam stem_norm;
  std::vector<std::vector<BottleneckParams>> stages;
};

BackboneParams build_backbone(const BackboneConfig& cfg, std::uint64_t seed);

Tensor backbone_forward(const Tensor& img, const BackboneParams& p, Binder& bind);

// Per-channel normalization over spatial positions with learnable
// scale/offset.
Tensor channel_norm(const Tensor& x, const NormParam& p, Binder& bind, double eps = 1e-5);

std::size_t parameter_count(const BackboneParams& p);

// Stable-path enumeration of every learnable array, used by the optimizer
// and the checkpoint writer.
void visit_params(BackboneParams& p,
                  const std::function<void(const std::string&, Array&)>& fn);

}  // namespace dcha
