#include "dcha/attention.hpp"

#include <cmath>

namespace dcha {

Tensor project_1x1(const Tensor& x, const ConvParam& p, Binder& bind, const char* who) {
  require(x.shape().size() == 3, "shape", std::string(who) + ": input must be [CxHxW]");
  require(p.w.shape[1] == x.shape()[0], "shape",
          std::string(who) + ": feature map has " + std::to_string(x.shape()[0]) +
              " channels but projection expects " + std::to_string(p.w.shape[1]));
  return conv2d(x, bind(p.w), bind(p.b), 1, 0);
}

namespace {

ConvParam make_projection(int channels, Rng& rng) {
  // fan-in rule keeps initial attention logits near zero without saturation
  double bound = std::sqrt(1.0 / channels);
  ConvParam p;
  p.w = uniform_init({channels, channels, 1, 1}, bound, rng);
  p.b = Array({channels});
  return p;
}

}  // namespace

LocalRelationParams make_local_relation(int channels, int k, Rng& rng) {
  require(k >= 1 && k % 2 == 1, "config", "local relation window k must be odd and >= 1");
  LocalRelationParams p;
  p.query = make_projection(channels, rng);
  p.key = make_projection(channels, rng);
  p.k = k;
  return p;
}

NonLocalAttentionParams make_nonlocal_attention(int channels, Rng& rng) {
  NonLocalAttentionParams p;
  p.query = make_projection(channels, rng);
  p.key = make_projection(channels, rng);
  return p;
}

HybridAttentionModule make_hybrid_module(int channels, int k, Rng& rng) {
  HybridAttentionModule m;
  m.local = make_local_relation(channels, k, rng);
  m.nonlocal_ = make_nonlocal_attention(channels, rng);
  return m;
}

Tensor local_relation_forward(const Tensor& f, const LocalRelationParams& p, Binder& bind) {
  int c = f.shape()[0], h = f.shape()[1], w = f.shape()[2];
  Tensor qpool = project_1x1(f, p.query, bind, "local relation query");
  Tensor kpool = project_1x1(f, p.key, bind, "local relation key");
  Tensor q = extract_patches(qpool, 1, 1);        // [HW x C x 1]
  Tensor keys = extract_patches(kpool, p.k, p.k); // [HW x C x k^2]
  Tensor vals = extract_patches(f, p.k, p.k);     // values from the raw map
  Tensor scores = mul_scalar(bmm_qk(q, keys), 1.0 / std::sqrt(double(c)));  // [HW x 1 x k^2]
  Tensor attn = softmax_lastdim(scores);
  Tensor related = bmm_av(attn, vals);            // [HW x C x 1]
  return add(pack_pixels(related, h, w), f);      // skip connection
}

Tensor nonlocal_attention_forward(const Tensor& f_prime, const NonLocalAttentionParams& p,
                                  Binder& bind) {
  int c = f_prime.shape()[0], w = f_prime.shape()[2];
  Tensor qpool = project_1x1(f_prime, p.query, bind, "non-local query");
  Tensor kpool = project_1x1(f_prime, p.key, bind, "non-local key");
  Tensor q = extract_patches(qpool, 1, w);   // [H x C x W]
  Tensor keys = extract_patches(kpool, 1, w);
  Tensor vals = extract_patches(f_prime, 1, w);
  // softmax over the key/column index
  Tensor scores = mul_scalar(bmm_qk(q, keys), 1.0 / std::sqrt(double(c)));  // [H x W x W]
  Tensor attn = softmax_lastdim(scores);
  Tensor related = bmm_av(attn, vals);       // [H x C x W]
  return add(pack_rows(related), f_prime);   // skip connection
}

Tensor hybrid_forward(const Tensor& f, const HybridAttentionModule& m, Binder& bind) {
  return nonlocal_attention_forward(local_relation_forward(f, m.local, bind), m.nonlocal_, bind);
}

}  // namespace dcha
