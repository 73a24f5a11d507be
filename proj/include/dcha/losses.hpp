#pragma once

#include "dcha/tensor.hpp"

namespace dcha {

struct ViewPrediction {
  double p_cc = 0.0;
  double p_mlo = 0.0;
  int label = 0;
};

struct LossBreakdown {
  double corr = 0.0;
  double clss_cc = 0.0;
  double clss_mlo = 0.0;
  double total = 0.0;
};

// Mean-centered cosine (Pearson form) of two equal-length vectors.
Tensor cosine_sim(const Tensor& x, const Tensor& y, double eps = 1e-8);

// Negative mean over rows of the per-row similarity between the two views'
// maps; the row vector is the full CxW slice flattened.
Tensor dual_view_corr_loss(const Tensor& r_cc, const Tensor& r_mlo);

// Binary cross-entropy on a probability, clamped to [1e-7, 1-1e-7].
Tensor bce(const Tensor& p, int y);

struct TotalLoss {
  Tensor corr, clss_cc, clss_mlo, total;
  LossBreakdown values() const {
    return {corr.item(), clss_cc.item(), clss_mlo.item(), total.item()};
  }
};

// total = corr + clss_cc + clss_mlo, unweighted. Pass use_corr=false for
// the correlation-free ablations (corr reported as 0 and kept off the
// optimization objective).
TotalLoss total_loss(const Tensor& r_cc, const Tensor& r_mlo, const Tensor& p_cc,
                     const Tensor& p_mlo, int label, bool use_corr = true);

}  // namespace dcha
