#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "dcha/backbone.hpp"
#include "dcha/checkpoint.hpp"
#include "fd_check.hpp"

using namespace dcha;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

std::vector<double> forward_values(const std::vector<double>& img, const Shape& s,
                                   const BackboneParams& p) {
  Tape tape;
  Binder bind(tape, false);
  return backbone_forward(tape.tensor(s, img), p, bind).data();
}

}  // namespace

TEST_CASE("build_backbone is deterministic under the seed") {
  auto cfg = BackboneConfig::toy();
  auto a = build_backbone(cfg, 99);
  auto b = build_backbone(cfg, 99);
  auto c = build_backbone(cfg, 100);
  bool identical = true, differs = false;
  visit_params(a, [&](const std::string& name, Array& arr) {
    visit_params(b, [&](const std::string& n2, Array& arr2) {
      if (n2 == name && arr2.data != arr.data) identical = false;
    });
    visit_params(c, [&](const std::string& n2, Array& arr2) {
      if (n2 == name && arr2.data != arr.data) differs = true;
    });
  });
  CHECK(identical);
  CHECK(differs);
}

TEST_CASE("paper-scale config yields 1024 feature channels") {
  auto cfg = BackboneConfig::paper_scale();
  cfg.validate();
  CHECK(cfg.feature_channels == 1024);
  CHECK(cfg.bottlenecks_per_stage == std::vector<int>{3, 4, 23});
}

TEST_CASE("toy config parameter count under 1e5, matching analytic count") {
  auto cfg = BackboneConfig::toy();
  auto p = build_backbone(cfg, 1);
  // count the same architecture by hand from the config
  auto conv_n = [](int cout, int cin, int k) { return std::size_t(cout) * cin * k * k + cout; };
  auto norm_n = [](int c) { return std::size_t(2) * c; };
  std::size_t expect = conv_n(cfg.stem_channels, cfg.in_channels, cfg.stem_kernel) +
                       norm_n(cfg.stem_channels);
  int in_c = cfg.stem_channels;
  for (std::size_t s = 0; s < cfg.stage_channel_multipliers.size(); ++s) {
    int mid = cfg.stem_channels * cfg.stage_channel_multipliers[s];
    int out = 4 * mid;
    for (int b = 0; b < cfg.bottlenecks_per_stage[s]; ++b) {
      int stride = b == 0 ? cfg.stage_strides[s] : 1;
      expect += conv_n(mid, in_c, 1) + norm_n(mid) + conv_n(mid, mid, 3) + norm_n(mid) +
                conv_n(out, mid, 1) + norm_n(out);
      if (in_c != out || stride != 1) expect += conv_n(out, in_c, 1) + norm_n(out);
      in_c = out;
    }
  }
  CHECK(parameter_count(p) == expect);
  CHECK(parameter_count(p) < 100000);
}

TEST_CASE("inconsistent configs are rejected") {
  auto cfg = BackboneConfig::toy();
  cfg.stage_strides = {1, 2};  // only two stride-2 reductions overall
  CHECK_THROWS_AS(build_backbone(cfg, 0), Error);
  cfg = BackboneConfig::toy();
  cfg.feature_channels = 64;
  CHECK_THROWS_AS(build_backbone(cfg, 0), Error);
  cfg = BackboneConfig::toy();
  cfg.bottlenecks_per_stage = {1};
  CHECK_THROWS_AS(build_backbone(cfg, 0), Error);
}

TEST_CASE("forward spatial contract") {
  auto p = build_backbone(BackboneConfig::toy(), 5);
  Rng rng(6);
  SUBCASE("256x256 input maps to 32x32") {
    Tape tape;
    Binder bind(tape, false);
    auto out = backbone_forward(tape.tensor({1, 256, 256}, random_vec(rng, 256 * 256, 0.0, 1.0)),
                                p, bind);
    CHECK(out.shape() == Shape{32, 32, 32});
  }
  SUBCASE("64x64 toy input maps to 8x8") {
    Tape tape;
    Binder bind(tape, false);
    auto out =
        backbone_forward(tape.tensor({1, 64, 64}, random_vec(rng, 64 * 64, 0.0, 1.0)), p, bind);
    CHECK(out.shape() == Shape{32, 8, 8});
  }
  SUBCASE("non-divisible input dims rejected") {
    Tape tape;
    Binder bind(tape, false);
    CHECK_THROWS_AS(backbone_forward(tape.full({1, 60, 64}, 0.0), p, bind), Error);
  }
  SUBCASE("all-zero input with fresh (zero-bias) params gives all-zero features") {
    auto out = forward_values(std::vector<double>(64 * 64, 0.0), {1, 64, 64}, p);
    for (double v : out) CHECK(v == 0.0);
  }
}

TEST_CASE("zeroing a bottleneck's final conv makes it the identity (skip path only)") {
  auto cfg = BackboneConfig::toy();
  cfg.bottlenecks_per_stage = {1, 2};  // second block of stage 1 has an identity skip
  auto p = build_backbone(cfg, 17);
  auto& last = p.stages[1][1];
  REQUIRE(!last.proj.has_value());
  std::fill(last.conv3.w.data.begin(), last.conv3.w.data.end(), 0.0);
  std::fill(last.conv3.b.data.begin(), last.conv3.b.data.end(), 0.0);

  BackboneParams truncated = p;
  truncated.stages[1].pop_back();

  Rng rng(18);
  auto img = random_vec(rng, 32 * 32, 0.0, 1.0);
  auto with_block = forward_values(img, {1, 32, 32}, p);
  auto without = forward_values(img, {1, 32, 32}, truncated);
  REQUIRE(with_block.size() == without.size());
  for (std::size_t i = 0; i < without.size(); ++i) CHECK(with_block[i] == without[i]);
}

TEST_CASE("channel_norm normalizes per channel and is differentiable") {
  Rng rng(19);
  NormParam nrm;
  nrm.gamma = Array({2}, std::vector<double>{1.3, 0.8});
  nrm.beta = Array({2}, std::vector<double>{0.1, -0.2});
  auto x0 = random_vec(rng, 2 * 3 * 3);
  {
    Tape tape;
    Binder bind(tape, false);
    auto y = channel_norm(tape.tensor({2, 3, 3}, x0), nrm, bind);
    for (int c = 0; c < 2; ++c) {
      double m = 0.0;
      for (int i = 0; i < 9; ++i) m += y.data()[c * 9 + i];
      m /= 9.0;
      CHECK(m == doctest::Approx(nrm.beta.data[c]).epsilon(1e-9));
    }
  }
  auto f = [&](const std::vector<double>& x) {
    Tape tape;
    Binder bind(tape, false);
    Rng wr(7);
    auto w = tape.tensor({2, 3, 3}, random_vec(wr, 18, 0.5, 1.5));
    return sum(mul(channel_norm(tape.tensor({2, 3, 3}, x, true), nrm, bind), w)).item();
  };
  auto g = [&](const std::vector<double>& x) {
    Tape tape;
    Binder bind(tape, false);
    Rng wr(7);
    auto w = tape.tensor({2, 3, 3}, random_vec(wr, 18, 0.5, 1.5));
    auto leaf = tape.tensor({2, 3, 3}, x, true);
    auto loss = sum(mul(channel_norm(leaf, nrm, bind), w));
    tape.backward(loss);
    return leaf.grad();
  };
  CHECK(fd::check_grad(f, g, x0) < 1e-3);
}

TEST_CASE("backbone forward/backward gradient check on a micro config") {
  BackboneConfig cfg;
  cfg.in_channels = 1;
  cfg.stem_channels = 2;
  cfg.stem_kernel = 3;
  cfg.stage_channel_multipliers = {1, 1};
  cfg.bottlenecks_per_stage = {1, 1};
  cfg.stage_strides = {2, 2};
  cfg.feature_channels = 8;
  auto params = build_backbone(cfg, 23);
  Rng rng(24);
  auto img0 = random_vec(rng, 16 * 16, 0.1, 0.9);

  std::vector<Array*> arrays;
  visit_params(params, [&](const std::string&, Array& a) { arrays.push_back(&a); });
  std::size_t psize = 0;
  for (auto* a : arrays) psize += a->size();

  std::vector<double> x0(psize + img0.size());
  {
    std::size_t off = 0;
    for (auto* a : arrays)
      for (double v : a->data) x0[off++] = v;
    for (double v : img0) x0[off++] = v;
  }

  auto eval = [&](const std::vector<double>& x, bool with_grad,
                  std::vector<double>* grad_out) -> double {
    BackboneParams pp = params;
    std::vector<Array*> local;
    visit_params(pp, [&](const std::string&, Array& a) { local.push_back(&a); });
    std::size_t off = 0;
    for (auto* a : local)
      for (double& v : a->data) v = x[off++];
    std::vector<double> img(x.begin() + off, x.end());
    Tape tape;
    Binder bind(tape, with_grad);
    auto leaf = tape.tensor({1, 16, 16}, img, with_grad);
    Rng wr(3);
    auto out = backbone_forward(leaf, pp, bind);
    auto w = tape.tensor(out.shape(), random_vec(wr, out.size(), 0.5, 1.5));
    auto loss = mean(mul(out, w));
    if (!with_grad) return loss.item();
    tape.backward(loss);
    std::unordered_map<const Array*, std::vector<double>> grads;
    bind.accumulate_grads(grads);
    grad_out->clear();
    for (auto* a : local) {
      auto it = grads.find(a);
      if (it == grads.end())
        grad_out->insert(grad_out->end(), a->size(), 0.0);
      else
        grad_out->insert(grad_out->end(), it->second.begin(), it->second.end());
    }
    grad_out->insert(grad_out->end(), leaf.grad().begin(), leaf.grad().end());
    return loss.item();
  };

  std::vector<double> analytic;
  eval(x0, true, &analytic);
  auto numeric = fd::central_diff([&](const std::vector<double>& x) { return eval(x, false, nullptr); },
                                  x0, 1e-4);
  CHECK(fd::max_rel_err(analytic, numeric) < 1e-3);
}

TEST_CASE("checkpoint round trip preserves every parameter bit-exactly") {
  auto p = build_backbone(BackboneConfig::toy(), 77);
  std::map<std::string, const Array*> entries;
  visit_params(p, [&](const std::string& name, Array& a) { entries[name] = &a; });
  std::string path = "test_backbone_ckpt.bin";
  save_checkpoint(path, entries);
  auto loaded = load_checkpoint(path);
  CHECK(loaded.size() == entries.size());
  visit_params(p, [&](const std::string& name, Array& a) {
    REQUIRE(loaded.count(name) == 1);
    CHECK(loaded.at(name).shape == a.shape);
    CHECK(loaded.at(name).data == a.data);
  });
  std::remove(path.c_str());
}
