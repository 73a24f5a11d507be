#pragma once

#include <memory>

#include "dcha/common.hpp"

namespace dcha {

class Tape;

namespace detail {
struct Access;
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // allocated lazily when requires_grad
  bool requires_grad = false;
  // Distributes this node's grad into its parents' grads.
  std::function<void(Node&)> backprop;
};
}  // namespace detail

// Lightweight handle into a Tape-owned node. Values are immutable once
// written; grads are filled by Tape::backward.
class Tensor {
public:
  Tensor() = default;

  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->data.size(); }
  const std::vector<double>& data() const { return node_->data; }
  const std::vector<double>& grad() const;
  bool requires_grad() const { return node_->requires_grad; }
  double item() const;
  Tape* tape() const { return tape_; }

private:
  friend class Tape;
  friend struct detail::Access;
  Tensor(detail::Node* n, Tape* t) : node_(n), tape_(t) {}
  detail::Node* node_ = nullptr;
  Tape* tape_ = nullptr;
};

// Ordered record of one forward pass. Rebuilt per pass; backward replays
// the record once, in reverse.
class Tape {
public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor tensor(Shape shape, std::vector<double> data, bool requires_grad = false);
  Tensor tensor(const Array& a, bool requires_grad = false) {
    return tensor(a.shape, a.data, requires_grad);
  }
  Tensor full(Shape shape, double value, bool requires_grad = false);
  Tensor scalar(double value) { return full({1}, value); }

  // loss must be a single-element tensor on this tape; a second call
  // without a fresh tape is rejected.
  void backward(const Tensor& loss);

  std::size_t num_nodes() const { return nodes_.size(); }

private:
  friend Tensor make_op(Tape* tape, Shape shape, std::vector<double> data,
                        const std::vector<Tensor>& inputs,
                        std::function<void(detail::Node&)> backprop);
  std::vector<std::unique_ptr<detail::Node>> nodes_;
  bool backward_done_ = false;
};

// --- elementwise ---
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor log_op(const Tensor& a);
Tensor sqrt_op(const Tensor& a);
// pass-through gradient inside [lo,hi], zero outside
Tensor clamp(const Tensor& a, double lo, double hi);

// --- reductions / shape ---
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
Tensor broadcast_to(const Tensor& scalar, int n);            // [1] -> [n]
Tensor broadcast_channel(const Tensor& v, int h, int w);     // [C] -> [CxHxW]
Tensor slice0(const Tensor& a, int i);                       // [N x rest] -> [rest]

// --- linear algebra / conv / attention primitives ---
Tensor matmul(const Tensor& a, const Tensor& b);  // [MxN]x[NxP] -> [MxP]
Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
              int stride, int pad);  // [CinxHxW], [CoutxCinxkxk], [Cout]
Tensor softmax_lastdim(const Tensor& a);
// k x k centered windows with zero padding -> [HW x C x k*k];
// 1 x W row windows -> [H x C x W]
Tensor extract_patches(const Tensor& x, int win_h, int win_w);
Tensor pack_pixels(const Tensor& p, int h, int w);  // [HW x C (x 1)] -> [C x H x W]
Tensor pack_rows(const Tensor& p);                  // [H x C x W] -> [C x H x W]
Tensor bmm_qk(const Tensor& a, const Tensor& b);    // [NxCxP],[NxCxQ] -> [NxPxQ] (A^T B)
Tensor bmm_av(const Tensor& w, const Tensor& v);    // [NxPxQ],[NxCxQ] -> [NxCxP]
Tensor global_avg_pool(const Tensor& x);            // [CxHxW] -> [C]

}  // namespace dcha
