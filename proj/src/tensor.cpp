#include "dcha/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace dcha {

namespace detail {
struct Access {
  static Node* node(const Tensor& t) { return t.node_; }
  static Tensor make(Node* n, Tape* t) { return Tensor(n, t); }
};
}  // namespace detail

namespace {

using detail::Access;
using detail::Node;

void ensure_grad(Node* n) {
  if (n->grad.empty()) n->grad.assign(n->data.size(), 0.0);
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), "shape",
          std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
              shape_str(b.shape()));
}

}  // namespace

Tensor make_op(Tape* tape, Shape shape, std::vector<double> data,
               const std::vector<Tensor>& inputs,
               std::function<void(detail::Node&)> backprop);

const std::vector<double>& Tensor::grad() const {
  require(!node_->grad.empty(), "grad",
          "gradient not populated; run backward on a loss that depends on this tensor");
  return node_->grad;
}

double Tensor::item() const {
  require(node_->data.size() == 1, "shape", "item() on non-scalar tensor " + shape_str(shape()));
  return node_->data[0];
}

Tensor make_op(Tape* tape, Shape shape, std::vector<double> data,
               const std::vector<Tensor>& inputs,
               std::function<void(Node&)> backprop) {
  require(tape != nullptr, "tape", "operation requires tape-backed inputs");
  auto node = std::make_unique<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  require(node->data.size() == numel(node->shape), "shape", "op output data/shape mismatch");
  for (const auto& in : inputs) {
    require(in.tape() == tape, "tape", "all inputs of an op must live on one tape");
    if (in.requires_grad()) node->requires_grad = true;
  }
  if (node->requires_grad) node->backprop = std::move(backprop);
  Node* raw = node.get();
  tape->nodes_.push_back(std::move(node));
  return Access::make(raw, tape);
}

Tensor Tape::tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  require(data.size() == numel(shape), "shape",
          "leaf data length does not match shape " + shape_str(shape));
  auto node = std::make_unique<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  Node* raw = node.get();
  nodes_.push_back(std::move(node));
  return Access::make(raw, this);
}

Tensor Tape::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> d(numel(shape), value);
  return tensor(std::move(shape), std::move(d), requires_grad);
}

void Tape::backward(const Tensor& loss) {
  require(loss.tape() == this, "tape", "loss does not belong to this tape");
  require(loss.size() == 1, "shape",
          "backward requires a scalar loss, got " + shape_str(loss.shape()));
  require(!backward_done_, "tape", "backward already ran on this tape; rebuild the tape");
  backward_done_ = true;
  Node* loss_node = Access::node(loss);
  if (!loss_node->requires_grad) return;  // loss does not depend on any parameter
  for (auto& n : nodes_)
    if (n->requires_grad) ensure_grad(n.get());
  loss_node->grad[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& n = **it;
    if (n.requires_grad && n.backprop) n.backprop(n);
  }
}

// ---------------------------------------------------------------------------
// elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  Node* pa = Access::node(a);
  Node* pb = Access::node(b);
  return make_op(a.tape(), a.shape(), std::move(out), {a, b}, [pa, pb](Node& n) {
    if (pa->requires_grad)
      for (std::size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += n.grad[i];
    if (pb->requires_grad)
      for (std::size_t i = 0; i < n.grad.size(); ++i) pb->grad[i] += n.grad[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  Node* pa = Access::node(a);
  Node* pb = Access::node(b);
  return make_op(a.tape(), a.shape(), std::move(out), {a, b}, [pa, pb](Node& n) {
    if (pa->requires_grad)
      for (std::size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += n.grad[i];
    if (pb->requires_grad)
      for (std::size_t i = 0; i < n.grad.size(); ++i) pb->grad[i] -= n.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  Node* pa = Access::node(a);
  Node* pb = Access::node(b);
  return make_op(a.tape(), a.shape(), std::move(out), {a, b}, [pa, pb](Node& n) {
    if (pa->requires_grad)
      for (std::size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += n.grad[i] * pb->data[i];
    if (pb->requires_grad)
      for (std::size_t i = 0; i < n.grad.size(); ++i) pb->grad[i] += n.grad[i] * pa->data[i];
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "div");
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] / bv[i];
  Node* pa = Access::node(a);
  Node* pb = Access::node(b);
  return make_op(a.tape(), a.shape(), std::move(out), {a, b}, [pa, pb](Node& n) {
    if (pa->requires_grad)
      for (std::size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += n.grad[i] / pb->data[i];
    if (pb->requires_grad)
      for (std::size_t i = 0; i < n.grad.size(); ++i)
        pb->grad[i] -= n.grad[i] * pa->data[i] / (pb->data[i] * pb->data[i]);
  });
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor add_scalar(const Tensor& a, double s) {
  std::vector<double> out(a.data());
  for (double& v : out) v += s;
  Node* pa = Access::node(a);
  return make_op(a.tape(), a.shape(), std::move(out), {a}, [pa](Node& n) {
    for (std::size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += n.grad[i];
  });
}

Tensor mul_scalar(const Tensor& a, double s) {
  std::vector<double> out(a.data());
  for (double& v : out) v *= s;
  Node* pa = Access::node(a);
  return make_op(a.tape(), a.shape(), std::move(out), {a}, [pa, s](Node& n) {
    for (std::size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += s * n.grad[i];
  });
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.data());
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  Node* pa = Access::node(a);
  return make_op(a.tape(), a.shape(), std::move(out), {a}, [pa](Node& n) {
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      if (pa->data[i] > 0.0) pa->grad[i] += n.grad[i];
  });
}

Tensor sigmoid(const Tensor& a) {
  std::vector<double> out(a.data());
  for (double& v : out) v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  Node* pa = Access::node(a);
  return make_op(a.tape(), a.shape(), std::move(out), {a}, [pa](Node& n) {
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      double y = n.data[i];
      pa->grad[i] += n.grad[i] * y * (1.0 - y);
    }
  });
}

Tensor log_op(const Tensor& a) {
  std::vector<double> out(a.data());
  for (double& v : out) v = std::log(v);
  Node* pa = Access::node(a);
  return make_op(a.tape(), a.shape(), std::move(out), {a}, [pa](Node& n) {
    for (std::size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += n.grad[i] / pa->data[i];
  });
}

Tensor sqrt_op(const Tensor& a) {
  std::vector<double> out(a.data());
  for (double& v : out) v = std::sqrt(v);
  Node* pa = Access::node(a);
  return make_op(a.tape(), a.shape(), std::move(out), {a}, [pa](Node& n) {
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      pa->grad[i] += n.grad[i] / (2.0 * n.data[i]);
  });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  require(lo <= hi, "args", "clamp: lo > hi");
  std::vector<double> out(a.data());
  for (double& v : out) v = std::min(hi, std::max(lo, v));
  Node* pa = Access::node(a);
  return make_op(a.tape(), a.shape(), std::move(out), {a}, [pa, lo, hi](Node& n) {
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      if (pa->data[i] >= lo && pa->data[i] <= hi) pa->grad[i] += n.grad[i];
  });
}

// ---------------------------------------------------------------------------
// reductions / shape

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  Node* pa = Access::node(a);
  return make_op(a.tape(), {1}, {s}, {a}, [pa](Node& n) {
    for (double& g : pa->grad) g += n.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  require(a.size() >= 1, "shape", "mean of empty tensor");
  double s = 0.0;
  for (double v : a.data()) s += v;
  double inv = 1.0 / double(a.size());
  Node* pa = Access::node(a);
  return make_op(a.tape(), {1}, {s * inv}, {a}, [pa, inv](Node& n) {
    for (double& g : pa->grad) g += n.grad[0] * inv;
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  require(numel(shape) == a.size(), "shape",
          "reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  Node* pa = Access::node(a);
  return make_op(a.tape(), std::move(shape), a.data(), {a}, [pa](Node& n) {
    for (std::size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += n.grad[i];
  });
}

Tensor broadcast_to(const Tensor& scalar, int n_out) {
  require(scalar.size() == 1, "shape", "broadcast_to expects a scalar");
  std::vector<double> out(std::size_t(n_out), scalar.data()[0]);
  Node* pa = Access::node(scalar);
  return make_op(scalar.tape(), {n_out}, std::move(out), {scalar}, [pa](Node& n) {
    for (double g : n.grad) pa->grad[0] += g;
  });
}

Tensor broadcast_channel(const Tensor& v, int h, int w) {
  require(v.shape().size() == 1, "shape", "broadcast_channel expects [C]");
  int c = v.shape()[0];
  std::vector<double> out(std::size_t(c) * h * w);
  for (int ci = 0; ci < c; ++ci)
    std::fill_n(out.begin() + std::size_t(ci) * h * w, std::size_t(h) * w, v.data()[ci]);
  Node* pa = Access::node(v);
  std::size_t hw = std::size_t(h) * w;
  return make_op(v.tape(), {c, h, w}, std::move(out), {v}, [pa, hw](Node& n) {
    for (std::size_t ci = 0; ci < pa->data.size(); ++ci) {
      double s = 0.0;
      for (std::size_t k = 0; k < hw; ++k) s += n.grad[ci * hw + k];
      pa->grad[ci] += s;
    }
  });
}

Tensor slice0(const Tensor& a, int i) {
  require(a.shape().size() >= 2, "shape", "slice0 expects rank >= 2");
  int n0 = a.shape()[0];
  require(i >= 0 && i < n0, "args", "slice0 index out of range");
  Shape rest(a.shape().begin() + 1, a.shape().end());
  std::size_t stride = numel(rest);
  std::vector<double> out(a.data().begin() + std::size_t(i) * stride,
                          a.data().begin() + std::size_t(i + 1) * stride);
  Node* pa = Access::node(a);
  return make_op(a.tape(), std::move(rest), std::move(out), {a}, [pa, i, stride](Node& n) {
    for (std::size_t k = 0; k < stride; ++k) pa->grad[std::size_t(i) * stride + k] += n.grad[k];
  });
}

// ---------------------------------------------------------------------------
// linear algebra / conv / attention primitives

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.shape().size() == 2 && b.shape().size() == 2, "shape", "matmul expects 2-D tensors");
  int m = a.shape()[0], n_in = a.shape()[1], p = b.shape()[1];
  require(b.shape()[0] == n_in, "shape",
          "matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " +
              shape_str(b.shape()));
  std::vector<double> out(std::size_t(m) * p, 0.0);
  const auto& av = a.data();
  const auto& bv = b.data();
  for (int i = 0; i < m; ++i)
    for (int k = 0; k < n_in; ++k) {
      double aik = av[std::size_t(i) * n_in + k];
      if (aik == 0.0) continue;
      for (int j = 0; j < p; ++j) out[std::size_t(i) * p + j] += aik * bv[std::size_t(k) * p + j];
    }
  Node* pa = Access::node(a);
  Node* pb = Access::node(b);
  return make_op(a.tape(), {m, p}, std::move(out), {a, b}, [pa, pb, m, n_in, p](Node& n) {
    if (pa->requires_grad)
      for (int i = 0; i < m; ++i)
        for (int k = 0; k < n_in; ++k) {
          double s = 0.0;
          for (int j = 0; j < p; ++j)
            s += n.grad[std::size_t(i) * p + j] * pb->data[std::size_t(k) * p + j];
          pa->grad[std::size_t(i) * n_in + k] += s;
        }
    if (pb->requires_grad)
      for (int k = 0; k < n_in; ++k)
        for (int j = 0; j < p; ++j) {
          double s = 0.0;
          for (int i = 0; i < m; ++i)
            s += pa->data[std::size_t(i) * n_in + k] * n.grad[std::size_t(i) * p + j];
          pb->grad[std::size_t(k) * p + j] += s;
        }
  });
}

Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias, int stride,
              int pad) {
  require(input.shape().size() == 3, "shape", "conv2d input must be [CxHxW]");
  require(kernels.shape().size() == 4, "shape", "conv2d kernels must be [CoutxCinxkxk]");
  int cin = input.shape()[0], h = input.shape()[1], w = input.shape()[2];
  int cout = kernels.shape()[0], kc = kernels.shape()[1], kh = kernels.shape()[2],
      kw = kernels.shape()[3];
  require(kh == kw, "shape", "conv2d kernels must be square");
  require(kc == cin, "shape",
          "conv2d: input has " + std::to_string(cin) + " channels but kernels expect " +
              std::to_string(kc));
  require(bias.shape() == Shape{cout}, "shape", "conv2d bias must be [Cout]");
  require(stride >= 1, "args", "conv2d stride must be positive");
  require(pad >= 0, "args", "conv2d pad must be nonnegative");
  require(h + 2 * pad >= kh && w + 2 * pad >= kw, "shape",
          "conv2d: padded input smaller than kernel");
  int oh = (h + 2 * pad - kh) / stride + 1;
  int ow = (w + 2 * pad - kw) / stride + 1;
  const auto& x = input.data();
  const auto& kv = kernels.data();
  const auto& bv = bias.data();
  std::vector<double> out(std::size_t(cout) * oh * ow);
  for (int co = 0; co < cout; ++co)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        double s = bv[co];
        int iy0 = oy * stride - pad, ix0 = ox * stride - pad;
        for (int ci = 0; ci < cin; ++ci) {
          const double* xp = &x[(std::size_t(ci) * h) * w];
          const double* kp = &kv[((std::size_t(co) * cin + ci) * kh) * kw];
          for (int a = 0; a < kh; ++a) {
            int iy = iy0 + a;
            if (iy < 0 || iy >= h) continue;
            for (int b = 0; b < kw; ++b) {
              int ix = ix0 + b;
              if (ix < 0 || ix >= w) continue;
              s += xp[std::size_t(iy) * w + ix] * kp[std::size_t(a) * kw + b];
            }
          }
        }
        out[(std::size_t(co) * oh + oy) * ow + ox] = s;
      }
  Node* px = Access::node(input);
  Node* pk = Access::node(kernels);
  Node* pb = Access::node(bias);
  return make_op(
      input.tape(), {cout, oh, ow}, std::move(out), {input, kernels, bias},
      [px, pk, pb, cin, h, w, cout, kh, kw, stride, pad, oh, ow](Node& n) {
        for (int co = 0; co < cout; ++co)
          for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
              double g = n.grad[(std::size_t(co) * oh + oy) * ow + ox];
              if (g == 0.0) continue;
              if (pb->requires_grad) pb->grad[co] += g;
              int iy0 = oy * stride - pad, ix0 = ox * stride - pad;
              for (int ci = 0; ci < cin; ++ci) {
                std::size_t xoff = std::size_t(ci) * h * w;
                std::size_t koff = (std::size_t(co) * cin + ci) * kh * kw;
                for (int a = 0; a < kh; ++a) {
                  int iy = iy0 + a;
                  if (iy < 0 || iy >= h) continue;
                  for (int b = 0; b < kw; ++b) {
                    int ix = ix0 + b;
                    if (ix < 0 || ix >= w) continue;
                    std::size_t xi = xoff + std::size_t(iy) * w + ix;
                    std::size_t ki = koff + std::size_t(a) * kw + b;
                    if (px->requires_grad) px->grad[xi] += g * pk->data[ki];
                    if (pk->requires_grad) pk->grad[ki] += g * px->data[xi];
                  }
                }
              }
            }
      });
}

Tensor softmax_lastdim(const Tensor& a) {
  require(!a.shape().empty(), "shape", "softmax on empty shape");
  int d = a.shape().back();
  require(d >= 1, "shape", "softmax last dimension must be >= 1");
  std::size_t outer = a.size() / std::size_t(d);
  std::vector<double> out(a.size());
  const auto& x = a.data();
  for (std::size_t o = 0; o < outer; ++o) {
    const double* xs = &x[o * d];
    double* ys = &out[o * d];
    double mx = xs[0];
    for (int i = 1; i < d; ++i) mx = std::max(mx, xs[i]);
    double z = 0.0;
    for (int i = 0; i < d; ++i) {
      ys[i] = std::exp(xs[i] - mx);
      z += ys[i];
    }
    for (int i = 0; i < d; ++i) ys[i] /= z;
  }
  Node* pa = Access::node(a);
  return make_op(a.tape(), a.shape(), std::move(out), {a}, [pa, d, outer](Node& n) {
    for (std::size_t o = 0; o < outer; ++o) {
      const double* y = &n.data[o * d];
      const double* g = &n.grad[o * d];
      double dot = 0.0;
      for (int i = 0; i < d; ++i) dot += g[i] * y[i];
      for (int i = 0; i < d; ++i) pa->grad[o * d + i] += y[i] * (g[i] - dot);
    }
  });
}

Tensor extract_patches(const Tensor& x, int win_h, int win_w) {
  require(x.shape().size() == 3, "shape", "extract_patches expects [CxHxW]");
  int c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  const auto& xv = x.data();
  Node* px = Access::node(x);
  if (win_h == 1 && win_w == w) {
    // one patch per row, no padding
    std::vector<double> out(std::size_t(h) * c * w);
    for (int i = 0; i < h; ++i)
      for (int ci = 0; ci < c; ++ci)
        for (int j = 0; j < w; ++j)
          out[(std::size_t(i) * c + ci) * w + j] = xv[(std::size_t(ci) * h + i) * w + j];
    return make_op(x.tape(), {h, c, w}, std::move(out), {x}, [px, c, h, w](Node& n) {
      for (int i = 0; i < h; ++i)
        for (int ci = 0; ci < c; ++ci)
          for (int j = 0; j < w; ++j)
            px->grad[(std::size_t(ci) * h + i) * w + j] +=
                n.grad[(std::size_t(i) * c + ci) * w + j];
    });
  }
  require(win_h == win_w && win_h % 2 == 1 && win_h >= 1, "args",
          "unsupported window geometry " + std::to_string(win_h) + "x" + std::to_string(win_w) +
              " (expect odd kxk or 1xW)");
  int k = win_h, off = (k - 1) / 2;
  std::vector<double> out(std::size_t(h) * w * c * k * k, 0.0);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      std::size_t npos = std::size_t(i) * w + j;
      for (int ci = 0; ci < c; ++ci)
        for (int a = 0; a < k; ++a) {
          int iy = i + a - off;
          if (iy < 0 || iy >= h) continue;
          for (int b = 0; b < k; ++b) {
            int ix = j + b - off;
            if (ix < 0 || ix >= w) continue;
            out[(npos * c + ci) * k * k + a * k + b] = xv[(std::size_t(ci) * h + iy) * w + ix];
          }
        }
    }
  return make_op(x.tape(), {h * w, c, k * k}, std::move(out), {x}, [px, c, h, w, k, off](Node& n) {
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        std::size_t npos = std::size_t(i) * w + j;
        for (int ci = 0; ci < c; ++ci)
          for (int a = 0; a < k; ++a) {
            int iy = i + a - off;
            if (iy < 0 || iy >= h) continue;
            for (int b = 0; b < k; ++b) {
              int ix = j + b - off;
              if (ix < 0 || ix >= w) continue;
              px->grad[(std::size_t(ci) * h + iy) * w + ix] +=
                  n.grad[(npos * c + ci) * k * k + a * k + b];
            }
          }
      }
  });
}

Tensor pack_pixels(const Tensor& p, int h, int w) {
  const Shape& s = p.shape();
  bool ok = (s.size() == 2 && s[0] == h * w) ||
            (s.size() == 3 && s[0] == h * w && s[2] == 1);
  require(ok, "shape", "pack_pixels expects [HWxC] or [HWxCx1], got " + shape_str(s));
  int c = s[1];
  std::vector<double> out(std::size_t(c) * h * w);
  const auto& pv = p.data();
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      for (int ci = 0; ci < c; ++ci)
        out[(std::size_t(ci) * h + i) * w + j] = pv[(std::size_t(i) * w + j) * c + ci];
  Node* pp = Access::node(p);
  return make_op(p.tape(), {c, h, w}, std::move(out), {p}, [pp, c, h, w](Node& n) {
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j)
        for (int ci = 0; ci < c; ++ci)
          pp->grad[(std::size_t(i) * w + j) * c + ci] +=
              n.grad[(std::size_t(ci) * h + i) * w + j];
  });
}

Tensor pack_rows(const Tensor& p) {
  require(p.shape().size() == 3, "shape", "pack_rows expects [HxCxW]");
  int h = p.shape()[0], c = p.shape()[1], w = p.shape()[2];
  std::vector<double> out(std::size_t(c) * h * w);
  const auto& pv = p.data();
  for (int i = 0; i < h; ++i)
    for (int ci = 0; ci < c; ++ci)
      for (int j = 0; j < w; ++j)
        out[(std::size_t(ci) * h + i) * w + j] = pv[(std::size_t(i) * c + ci) * w + j];
  Node* pp = Access::node(p);
  return make_op(p.tape(), {c, h, w}, std::move(out), {p}, [pp, c, h, w](Node& n) {
    for (int i = 0; i < h; ++i)
      for (int ci = 0; ci < c; ++ci)
        for (int j = 0; j < w; ++j)
          pp->grad[(std::size_t(i) * c + ci) * w + j] +=
              n.grad[(std::size_t(ci) * h + i) * w + j];
  });
}

Tensor bmm_qk(const Tensor& a, const Tensor& b) {
  require(a.shape().size() == 3 && b.shape().size() == 3, "shape", "bmm_qk expects 3-D tensors");
  int nb = a.shape()[0], c = a.shape()[1], p = a.shape()[2], q = b.shape()[2];
  require(b.shape()[0] == nb && b.shape()[1] == c, "shape",
          "bmm_qk: batch/channel mismatch " + shape_str(a.shape()) + " vs " +
              shape_str(b.shape()));
  std::vector<double> out(std::size_t(nb) * p * q, 0.0);
  const auto& av = a.data();
  const auto& bv = b.data();
  for (int n0 = 0; n0 < nb; ++n0)
    for (int ci = 0; ci < c; ++ci) {
      const double* ap = &av[(std::size_t(n0) * c + ci) * p];
      const double* bp = &bv[(std::size_t(n0) * c + ci) * q];
      for (int i = 0; i < p; ++i) {
        double ai = ap[i];
        double* op = &out[(std::size_t(n0) * p + i) * q];
        for (int j = 0; j < q; ++j) op[j] += ai * bp[j];
      }
    }
  Node* pa = Access::node(a);
  Node* pb = Access::node(b);
  return make_op(a.tape(), {nb, p, q}, std::move(out), {a, b}, [pa, pb, nb, c, p, q](Node& n) {
    for (int n0 = 0; n0 < nb; ++n0)
      for (int ci = 0; ci < c; ++ci) {
        const double* ap = &pa->data[(std::size_t(n0) * c + ci) * p];
        const double* bp = &pb->data[(std::size_t(n0) * c + ci) * q];
        double* gap = pa->requires_grad ? &pa->grad[(std::size_t(n0) * c + ci) * p] : nullptr;
        double* gbp = pb->requires_grad ? &pb->grad[(std::size_t(n0) * c + ci) * q] : nullptr;
        for (int i = 0; i < p; ++i) {
          const double* gp = &n.grad[(std::size_t(n0) * p + i) * q];
          if (gap) {
            double s = 0.0;
            for (int j = 0; j < q; ++j) s += gp[j] * bp[j];
            gap[i] += s;
          }
          if (gbp) {
            double ai = ap[i];
            for (int j = 0; j < q; ++j) gbp[j] += gp[j] * ai;
          }
        }
      }
  });
}

Tensor bmm_av(const Tensor& w, const Tensor& v) {
  require(w.shape().size() == 3 && v.shape().size() == 3, "shape", "bmm_av expects 3-D tensors");
  int nb = w.shape()[0], p = w.shape()[1], q = w.shape()[2], c = v.shape()[1];
  require(v.shape()[0] == nb && v.shape()[2] == q, "shape",
          "bmm_av: batch/key mismatch " + shape_str(w.shape()) + " vs " + shape_str(v.shape()));
  std::vector<double> out(std::size_t(nb) * c * p, 0.0);
  const auto& wv = w.data();
  const auto& vv = v.data();
  for (int n0 = 0; n0 < nb; ++n0)
    for (int ci = 0; ci < c; ++ci) {
      const double* vp = &vv[(std::size_t(n0) * c + ci) * q];
      double* op = &out[(std::size_t(n0) * c + ci) * p];
      for (int i = 0; i < p; ++i) {
        const double* wp = &wv[(std::size_t(n0) * p + i) * q];
        double s = 0.0;
        for (int j = 0; j < q; ++j) s += wp[j] * vp[j];
        op[i] = s;
      }
    }
  Node* pw = Access::node(w);
  Node* pv = Access::node(v);
  return make_op(w.tape(), {nb, c, p}, std::move(out), {w, v}, [pw, pv, nb, c, p, q](Node& n) {
    for (int n0 = 0; n0 < nb; ++n0)
      for (int ci = 0; ci < c; ++ci) {
        const double* vp = &pv->data[(std::size_t(n0) * c + ci) * q];
        const double* gp = &n.grad[(std::size_t(n0) * c + ci) * p];
        double* gvp = pv->requires_grad ? &pv->grad[(std::size_t(n0) * c + ci) * q] : nullptr;
        for (int i = 0; i < p; ++i) {
          double g = gp[i];
          const double* wp = &pw->data[(std::size_t(n0) * p + i) * q];
          double* gwp = pw->requires_grad ? &pw->grad[(std::size_t(n0) * p + i) * q] : nullptr;
          for (int j = 0; j < q; ++j) {
            if (gwp) gwp[j] += g * vp[j];
            if (gvp) gvp[j] += g * wp[j];
          }
        }
      }
  });
}

Tensor global_avg_pool(const Tensor& x) {
  require(x.shape().size() == 3, "shape", "global_avg_pool expects [CxHxW]");
  int c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  require(h * w >= 1, "shape", "global_avg_pool on empty map");
  std::size_t hw = std::size_t(h) * w;
  double inv = 1.0 / double(hw);
  std::vector<double> out(c, 0.0);
  const auto& xv = x.data();
  for (int ci = 0; ci < c; ++ci) {
    double s = 0.0;
    for (std::size_t k = 0; k < hw; ++k) s += xv[ci * hw + k];
    out[ci] = s * inv;
  }
  Node* px = Access::node(x);
  return make_op(x.tape(), {c}, std::move(out), {x}, [px, c, hw, inv](Node& n) {
    for (int ci = 0; ci < c; ++ci) {
      double g = n.grad[ci] * inv;
      for (std::size_t k = 0; k < hw; ++k) px->grad[ci * hw + k] += g;
    }
  });
}

}  // namespace dcha
