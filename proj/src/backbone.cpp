#include "dcha/backbone.hpp"

#include <cmath>

namespace dcha {

void BackboneConfig::validate() const {
  require(in_channels >= 1 && stem_channels >= 1, "config", "backbone channel counts must be >= 1");
  require(stem_kernel >= 1 && stem_kernel % 2 == 1, "config", "stem kernel must be odd");
  require(!stage_channel_multipliers.empty(), "config", "backbone needs at least one stage");
  require(stage_channel_multipliers.size() == bottlenecks_per_stage.size() &&
              stage_channel_multipliers.size() == stage_strides.size(),
          "config", "per-stage lists must have equal length");
  for (int m : stage_channel_multipliers) require(m >= 1, "config", "stage multiplier must be >= 1");
  for (int b : bottlenecks_per_stage) require(b >= 1, "config", "bottleneck count must be >= 1");
  int twos = (stem_stride == 2) ? 1 : 0;
  int total = stem_stride;
  require(stem_stride == 1 || stem_stride == 2, "config", "stem stride must be 1 or 2");
  for (int s : stage_strides) {
    require(s == 1 || s == 2, "config", "stage strides must be 1 or 2");
    if (s == 2) ++twos;
    total *= s;
  }
  require(twos == 3 && total == 8, "config",
          "backbone must contain exactly three stride-2 reductions (overall downscale 8)");
  require(feature_channels == 4 * stem_channels * stage_channel_multipliers.back(), "config",
          "feature_channels must equal 4 * stem_channels * last stage multiplier");
}

int BackboneConfig::downscale() const { return 8; }

BackboneConfig BackboneConfig::paper_scale() {
  BackboneConfig cfg;
  cfg.in_channels = 1;
  cfg.stem_channels = 64;
  cfg.stem_kernel = 7;
  cfg.stem_stride = 2;
  cfg.stage_channel_multipliers = {1, 2, 4};
  cfg.bottlenecks_per_stage = {3, 4, 23};
  cfg.stage_strides = {1, 2, 2};
  cfg.feature_channels = 1024;
  return cfg;
}

BackboneConfig BackboneConfig::toy() { return BackboneConfig{}; }

namespace {

ConvParam make_conv(int cout, int cin, int k, Rng& rng) {
  double bound = std::sqrt(6.0 / (double(cin) * k * k));
  ConvParam p;
  p.w = uniform_init({cout, cin, k, k}, bound, rng);
  p.b = Array({cout});
  return p;
}

NormParam make_norm(int c) {
  NormParam p;
  p.gamma = Array({c}, 1.0);
  p.beta = Array({c});
  return p;
}

}  // namespace

BackboneParams build_backbone(const BackboneConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed ^ 0x5b8b0c0ffee1234ull);
  BackboneParams p;
  p.cfg = cfg;
  p.stem = make_conv(cfg.stem_channels, cfg.in_channels, cfg.stem_kernel, rng);
  p.stem_norm = make_norm(cfg.stem_channels);
  int in_c = cfg.stem_channels;
  for (std::size_t s = 0; s < cfg.stage_channel_multipliers.size(); ++s) {
    int mid = cfg.stem_channels * cfg.stage_channel_multipliers[s];
    int out_c = 4 * mid;
    std::vector<BottleneckParams> stage;
    for (int b = 0; b < cfg.bottlenecks_per_stage[s]; ++b) {
      int stride = (b == 0) ? cfg.stage_strides[s] : 1;
      BottleneckParams blk;
      blk.conv1 = make_conv(mid, in_c, 1, rng);
      blk.norm1 = make_norm(mid);
      blk.conv2 = make_conv(mid, mid, 3, rng);
      blk.norm2 = make_norm(mid);
      blk.conv3 = make_conv(out_c, mid, 1, rng);
      blk.norm3 = make_norm(out_c);
      if (in_c != out_c || stride != 1) {
        blk.proj = make_conv(out_c, in_c, 1, rng);
        blk.proj_norm = make_norm(out_c);
      }
      stage.push_back(std::move(blk));
      in_c = out_c;
    }
    p.stages.push_back(std::move(stage));
  }
  return p;
}

Tensor channel_norm(const Tensor& x, const NormParam& p, Binder& bind, double eps) {
  int c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  require(p.gamma.shape == Shape{c}, "shape", "channel_norm: gamma has wrong channel count");
  Tensor mu = global_avg_pool(x);
  Tensor xc = sub(x, broadcast_channel(mu, h, w));
  Tensor var = global_avg_pool(mul(xc, xc));
  Tensor istd = div(bind.tape().full({c}, 1.0), sqrt_op(add_scalar(var, eps)));
  Tensor scale = mul(bind(p.gamma), istd);
  return add(mul(xc, broadcast_channel(scale, h, w)), broadcast_channel(bind(p.beta), h, w));
}

namespace {

Tensor bottleneck_forward(const Tensor& x, const BottleneckParams& blk, int stride, Binder& bind) {
  Tensor t = relu(channel_norm(conv2d(x, bind(blk.conv1.w), bind(blk.conv1.b), 1, 0), blk.norm1, bind));
  t = relu(channel_norm(conv2d(t, bind(blk.conv2.w), bind(blk.conv2.b), stride, 1), blk.norm2, bind));
  t = channel_norm(conv2d(t, bind(blk.conv3.w), bind(blk.conv3.b), 1, 0), blk.norm3, bind);
  Tensor skip = x;
  if (blk.proj)
    skip = channel_norm(conv2d(x, bind(blk.proj->w), bind(blk.proj->b), stride, 0), *blk.proj_norm,
                        bind);
  return relu(add(t, skip));
}

}  // namespace

Tensor backbone_forward(const Tensor& img, const BackboneParams& p, Binder& bind) {
  require(img.shape().size() == 3, "shape", "backbone input must be [CxHxW]");
  require(img.shape()[0] == p.cfg.in_channels, "shape",
          "backbone expects " + std::to_string(p.cfg.in_channels) + " input channels, got " +
              std::to_string(img.shape()[0]));
  require(img.shape()[1] % 8 == 0 && img.shape()[2] % 8 == 0, "shape",
          "backbone input dims must be divisible by 8 (resize upstream), got " +
              shape_str(img.shape()));
  int pad = (p.cfg.stem_kernel - 1) / 2;
  Tensor t = conv2d(img, bind(p.stem.w), bind(p.stem.b), p.cfg.stem_stride, pad);
  t = relu(channel_norm(t, p.stem_norm, bind));
  for (std::size_t s = 0; s < p.stages.size(); ++s)
    for (std::size_t b = 0; b < p.stages[s].size(); ++b)
      t = bottleneck_forward(t, p.stages[s][b], b == 0 ? p.cfg.stage_strides[s] : 1, bind);
  return t;
}

std::size_t parameter_count(const BackboneParams& p) {
  std::size_t n = 0;
  visit_params(const_cast<BackboneParams&>(p),
               [&](const std::string&, Array& a) { n += a.size(); });
  return n;
}

void visit_params(BackboneParams& p,
                  const std::function<void(const std::string&, Array&)>& fn) {
  fn("stem.conv.w", p.stem.w);
  fn("stem.conv.b", p.stem.b);
  fn("stem.norm.gamma", p.stem_norm.gamma);
  fn("stem.norm.beta", p.stem_norm.beta);
  for (std::size_t s = 0; s < p.stages.size(); ++s)
    for (std::size_t b = 0; b < p.stages[s].size(); ++b) {
      auto& blk = p.stages[s][b];
      std::string base = "stage" + std::to_string(s) + ".block" + std::to_string(b) + ".";
      auto conv = [&](const char* name, ConvParam& c) {
        fn(base + name + std::string(".w"), c.w);
        fn(base + name + std::string(".b"), c.b);
      };
      auto norm = [&](const char* name, NormParam& nrm) {
        fn(base + name + std::string(".gamma"), nrm.gamma);
        fn(base + name + std::string(".beta"), nrm.beta);
      };
      conv("conv1", blk.conv1);
      norm("norm1", blk.norm1);
      conv("conv2", blk.conv2);
      norm("norm2", blk.norm2);
      conv("conv3", blk.conv3);
      norm("norm3", blk.norm3);
      if (blk.proj) {
        conv("proj", *blk.proj);
        norm("proj_norm", *blk.proj_norm);
      }
    }
}

}  // namespace dcha
