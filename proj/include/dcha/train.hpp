#pragma once

#include "dcha/losses.hpp"
#include "dcha/model.hpp"
#include "dcha/preprocess.hpp"

namespace dcha {

struct TrainConfig {
  double lr0 = 5e-5;
  double lr_decay = 0.9;  // per epoch
  int epochs = 10;
  int batch_size = 4;
  std::uint64_t seed = 42;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool augment = false;
  AugmentConfig augment_cfg;
  std::string checkpoint_dir;  // empty: keep everything in memory

  void validate() const;
};

// First/second moment accumulators per parameter path.
struct AdamState {
  std::map<std::string, std::vector<double>> m1, m2;
  long t = 0;
};

// One bias-corrected Adam update over (path, array, gradient) triples.
// Non-finite gradients raise an error naming the parameter path.
void adam_step(const std::vector<std::pair<std::string, Array*>>& params,
               const std::map<std::string, std::vector<double>>& grads, AdamState& state,
               double lr, const TrainConfig& cfg);

// Mean training loss per epoch.
using LossTrace = std::vector<LossBreakdown>;

// Evaluates one case on a fresh tape; when grads is non-null, runs backward
// on the total objective and accumulates parameter gradients scaled by
// `scale` into it (keyed by parameter path).
LossBreakdown case_loss(DchaModel& model, const DualViewCase& cs,
                        std::map<std::string, std::vector<double>>* grads, double scale);

LossTrace train(DchaModel& model, const std::vector<DualViewCase>& cases,
                const TrainConfig& cfg);

void write_loss_trace(const std::string& path, const LossTrace& trace);

}  // namespace dcha
