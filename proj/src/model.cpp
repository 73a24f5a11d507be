#include "dcha/model.hpp"

#include <cmath>

#include "dcha/checkpoint.hpp"

namespace dcha {

void ModelConfig::validate() const {
  backbone.validate();
  require(attention_k >= 1 && attention_k % 2 == 1, "config", "attention_k must be odd");
}

DchaModel build_model(const ModelConfig& cfg) {
  cfg.validate();
  DchaModel m;
  m.cfg = cfg;
  m.backbone = build_backbone(cfg.backbone, cfg.init_seed);
  Rng rng(cfg.init_seed ^ 0x9d2c5680u);
  int c = cfg.backbone.feature_channels;
  m.hybrid = make_hybrid_module(c, cfg.attention_k, rng);
  double bound = std::sqrt(1.0 / c);
  m.head_cc.w = uniform_init({c, 1}, bound, rng);
  m.head_cc.b = Array({1});
  m.head_mlo.w = uniform_init({c, 1}, bound, rng);
  m.head_mlo.b = Array({1});
  return m;
}

namespace {

Tensor head_forward(const Tensor& r, const DenseParam& head, Binder& bind) {
  int c = r.shape()[0];
  Tensor pooled = reshape(global_avg_pool(r), {1, c});
  Tensor logit = reshape(matmul(pooled, bind(head.w)), {1});
  return sigmoid(add(logit, bind(head.b)));
}

}  // namespace

ViewOutput view_forward(const Tensor& img, DchaModel& m, View view, Binder& bind) {
  Tensor f = backbone_forward(img, m.backbone, bind);
  Tensor r = f;
  if (m.cfg.use_local) r = local_relation_forward(r, m.hybrid.local, bind);
  if (m.cfg.use_nonlocal) r = nonlocal_attention_forward(r, m.hybrid.nonlocal_, bind);
  const DenseParam& head = (view == View::CC) ? m.head_cc : m.head_mlo;
  return {head_forward(r, head, bind), r};
}

ForwardOutput model_forward(const Tensor& img_cc, const Tensor& img_mlo, DchaModel& m,
                            Binder& bind) {
  return {view_forward(img_cc, m, View::CC, bind),
          view_forward(img_mlo, m, View::MLO, bind)};
}

void visit_params(DchaModel& m, const std::function<void(const std::string&, Array&)>& fn) {
  visit_params(m.backbone, [&](const std::string& path, Array& a) { fn("backbone." + path, a); });
  fn("hybrid.local.query.w", m.hybrid.local.query.w);
  fn("hybrid.local.query.b", m.hybrid.local.query.b);
  fn("hybrid.local.key.w", m.hybrid.local.key.w);
  fn("hybrid.local.key.b", m.hybrid.local.key.b);
  fn("hybrid.nonlocal.query.w", m.hybrid.nonlocal_.query.w);
  fn("hybrid.nonlocal.query.b", m.hybrid.nonlocal_.query.b);
  fn("hybrid.nonlocal.key.w", m.hybrid.nonlocal_.key.w);
  fn("hybrid.nonlocal.key.b", m.hybrid.nonlocal_.key.b);
  fn("head_cc.w", m.head_cc.w);
  fn("head_cc.b", m.head_cc.b);
  fn("head_mlo.w", m.head_mlo.w);
  fn("head_mlo.b", m.head_mlo.b);
}

std::map<std::string, const Array*> named_params(DchaModel& m) {
  std::map<std::string, const Array*> out;
  visit_params(m, [&](const std::string& path, Array& a) { out[path] = &a; });
  return out;
}

void save_model(const std::string& path, DchaModel& m) {
  save_checkpoint(path, named_params(m));
}

void load_model(const std::string& path, DchaModel& m) {
  auto stored = load_checkpoint(path);
  std::size_t used = 0;
  visit_params(m, [&](const std::string& name, Array& a) {
    auto it = stored.find(name);
    require(it != stored.end(), "checkpoint", "missing parameter " + name + " in " + path);
    require(it->second.shape == a.shape, "checkpoint",
            "shape mismatch for " + name + " in " + path);
    a.data = it->second.data;
    ++used;
  });
  require(used == stored.size(), "checkpoint",
          "checkpoint " + path + " has extra parameters not present in the model");
}

}  // namespace dcha
