#pragma once

#include <map>

#include "dcha/attention.hpp"
#include "dcha/backbone.hpp"
#include "dcha/phantom.hpp"

namespace dcha {

struct ModelConfig {
  BackboneConfig backbone = BackboneConfig::toy();
  int attention_k = 3;
  bool use_local = true;     // off: skip the local relation block
  bool use_nonlocal = true;  // off: skip the non-local block
  bool use_corr = true;      // off: train on the classification terms only
  std::uint64_t init_seed = 7;

  void validate() const;
};

// Shared backbone and attention applied to both views; per-view heads.
struct DchaModel {
  ModelConfig cfg;
  BackboneParams backbone;
  HybridAttentionModule hybrid;
  DenseParam head_cc, head_mlo;  // feature_channels -> 1
};

DchaModel build_model(const ModelConfig& cfg);

struct ViewOutput {
  Tensor p;  // [1] probability
  Tensor r;  // [CxHxW] attended feature map
};

struct ForwardOutput {
  ViewOutput cc, mlo;
};

ViewOutput view_forward(const Tensor& img, DchaModel& m, View view, Binder& bind);
ForwardOutput model_forward(const Tensor& img_cc, const Tensor& img_mlo, DchaModel& m,
                            Binder& bind);

// Stable-path enumeration over every learnable array in the model.
void visit_params(DchaModel& m, const std::function<void(const std::string&, Array&)>& fn);

std::map<std::string, const Array*> named_params(DchaModel& m);

void save_model(const std::string& path, DchaModel& m);
// Loads values into an already-built model; shape or name mismatch is an error.
void load_model(const std::string& path, DchaModel& m);

}  // namespace dcha
