#pragma once

#include <unordered_map>

#include "dcha/common.hpp"
#include "dcha/tensor.hpp"

namespace dcha {

struct ConvParam {
  Array w;  // [Cout x Cin x k x k]
  Array b;  // [Cout]
};

struct NormParam {
  Array gamma;  // [C]
  Array beta;   // [C]
};

struct DenseParam {
  Array w;  // [Cin x Cout]
  Array b;  // [Cout]
};

// Binds parameter arrays onto a tape as gradient-tracked leaves, once per
// array. Shared parameters (backbone applied to both views) therefore get
// their adjoints accumulated on a single leaf.
class Binder {
public:
  explicit Binder(Tape& tape, bool with_grad = true) : tape_(&tape), with_grad_(with_grad) {}

  Tensor operator()(const Array& a) {
    auto it = bound_.find(&a);
    if (it != bound_.end()) return it->second;
    Tensor t = tape_->tensor(a.shape, a.data, with_grad_);
    bound_.emplace(&a, t);
    return t;
  }

  Tape& tape() { return *tape_; }

  // scale * grad of each bound leaf, summed into out (keyed by array).
  void accumulate_grads(std::unordered_map<const Array*, std::vector<double>>& out,
                        double scale = 1.0) const {
    for (const auto& [arr, leaf] : bound_) {
      auto& dst = out[arr];
      if (dst.empty()) dst.assign(arr->size(), 0.0);
      const auto& g = leaf.grad();
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += scale * g[i];
    }
  }

private:
  Tape* tape_;
  bool with_grad_;
  std::unordered_map<const Array*, Tensor> bound_;
};

inline Array uniform_init(Shape shape, double bound, Rng& rng) {
  Array a(std::move(shape));
  for (double& v : a.data) v = rng.uniform(-bound, bound);
  return a;
}

// conv1x1 with channel-count checking, the projection used by both
// attention blocks.
Tensor project_1x1(const Tensor& x, const ConvParam& p, Binder& bind, const char* who);

}  // namespace dcha
