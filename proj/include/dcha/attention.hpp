#pragma once

#include "dcha/params.hpp"

namespace dcha {

// Per-pixel attention over a k x k neighborhood: 1x1-projected queries and
// keys, values taken from the raw feature map, additive skip.
struct LocalRelationParams {
  ConvParam query;  // [C x C x 1 x 1] + [C]
  ConvParam key;
  int k = 3;  // odd window size; the absorbed in-row misalignment radius is (k-1)/2

  int channels() const { return query.w.shape[0]; }
};

// Per-row attention relating each pixel to every pixel of its own row.
struct NonLocalAttentionParams {
  ConvParam query;
  ConvParam key;

  int channels() const { return query.w.shape[0]; }
};

struct HybridAttentionModule {
  LocalRelationParams local;
  NonLocalAttentionParams nonlocal_;
};

LocalRelationParams make_local_relation(int channels, int k, Rng& rng);
NonLocalAttentionParams make_nonlocal_attention(int channels, Rng& rng);
HybridAttentionModule make_hybrid_module(int channels, int k, Rng& rng);

Tensor local_relation_forward(const Tensor& f, const LocalRelationParams& p, Binder& bind);
Tensor nonlocal_attention_forward(const Tensor& f_prime, const NonLocalAttentionParams& p,
                                  Binder& bind);
Tensor hybrid_forward(const Tensor& f, const HybridAttentionModule& m, Binder& bind);

}  // namespace dcha
