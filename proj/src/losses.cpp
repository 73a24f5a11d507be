#include "dcha/losses.hpp"

namespace dcha {

Tensor cosine_sim(const Tensor& x, const Tensor& y, double eps) {
  require(x.shape().size() == 1 && y.shape().size() == 1, "shape",
          "cosine_sim expects flat vectors");
  require(x.size() == y.size(), "shape",
          "cosine_sim: length mismatch " + std::to_string(x.size()) + " vs " +
              std::to_string(y.size()));
  require(x.size() >= 2, "shape", "cosine_sim needs length >= 2");
  int n = int(x.size());
  Tensor xc = sub(x, broadcast_to(mean(x), n));
  Tensor yc = sub(y, broadcast_to(mean(y), n));
  Tensor num = sum(mul(xc, yc));
  Tensor den = add_scalar(mul(sqrt_op(sum(mul(xc, xc))), sqrt_op(sum(mul(yc, yc)))), eps);
  return div(num, den);
}

Tensor dual_view_corr_loss(const Tensor& r_cc, const Tensor& r_mlo) {
  require(r_cc.shape().size() == 3 && r_cc.shape() == r_mlo.shape(), "shape",
          "dual_view_corr_loss: maps must share shape [CxHxW], got " + shape_str(r_cc.shape()) +
              " vs " + shape_str(r_mlo.shape()));
  int c = r_cc.shape()[0], h = r_cc.shape()[1], w = r_cc.shape()[2];
  Tensor rows_cc = extract_patches(r_cc, 1, w);    // [H x C x W]
  Tensor rows_mlo = extract_patches(r_mlo, 1, w);
  Tensor acc;
  for (int i = 0; i < h; ++i) {
    Tensor sim = cosine_sim(reshape(slice0(rows_cc, i), {c * w}),
                            reshape(slice0(rows_mlo, i), {c * w}));
    acc = (i == 0) ? sim : add(acc, sim);
  }
  return mul_scalar(acc, -1.0 / double(h));
}

Tensor bce(const Tensor& p, int y) {
  require(p.size() == 1, "shape", "bce expects a scalar probability");
  require(y == 0 || y == 1, "args", "bce label must be 0 or 1, got " + std::to_string(y));
  const double lo = 1e-7;
  Tensor ph = clamp(p, lo, 1.0 - lo);
  Tensor loss = (y == 1) ? neg(log_op(ph)) : neg(log_op(add_scalar(neg(ph), 1.0)));
  return loss;
}

TotalLoss total_loss(const Tensor& r_cc, const Tensor& r_mlo, const Tensor& p_cc,
                     const Tensor& p_mlo, int label, bool use_corr) {
  TotalLoss out;
  out.clss_cc = bce(p_cc, label);
  out.clss_mlo = bce(p_mlo, label);
  if (use_corr) {
    out.corr = dual_view_corr_loss(r_cc, r_mlo);
    out.total = add(out.corr, add(out.clss_cc, out.clss_mlo));
  } else {
    Tape* t = p_cc.tape();
    out.corr = t->scalar(0.0);
    out.total = add(out.clss_cc, out.clss_mlo);
  }
  return out;
}

}  // namespace dcha
