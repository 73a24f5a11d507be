#pragma once

#include <cstdint>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace dcha {

// Structured error for all expected failure modes (shape mismatches,
// bad configs, I/O). Carries a short kind tag plus a human message.
class Error : public std::runtime_error {
public:
  Error(std::string kind, const std::string& msg)
      : std::runtime_error(kind + ": " + msg), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

private:
  std::string kind_;
};

[[noreturn]] inline void fail(const std::string& kind, const std::string& msg) {
  throw Error(kind, msg);
}

inline void require(bool cond, const std::string& kind, const std::string& msg) {
  if (!cond) fail(kind, msg);
}

using Shape = std::vector<int>;

inline std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) n *= static_cast<std::size_t>(d);
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

// Plain named value array; the storage behind all learnable parameters.
struct Array {
  Shape shape;
  std::vector<double> data;

  Array() = default;
  Array(Shape s, double fill = 0.0) : shape(std::move(s)), data(numel(shape), fill) {}
  Array(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    require(data.size() == numel(shape), "shape",
            "array data length does not match shape " + shape_str(shape));
  }
  std::size_t size() const { return data.size(); }
};

// Grayscale image, values in [0,1], row-major.
struct Image {
  int h = 0;
  int w = 0;
  std::vector<double> v;

  Image() = default;
  Image(int h_, int w_, double fill = 0.0) : h(h_), w(w_), v(std::size_t(h_) * w_, fill) {}
  double& at(int r, int c) { return v[std::size_t(r) * w + c]; }
  double at(int r, int c) const { return v[std::size_t(r) * w + c]; }
};

// Deterministic RNG. Distribution code is our own so streams are stable
// across standard libraries.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

  std::uint64_t next_u64() {
    // splitmix64
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // inclusive bounds
  int uniform_int(int lo, int hi) {
    require(hi >= lo, "rng", "empty integer range");
    std::uint64_t span = std::uint64_t(hi) - std::uint64_t(lo) + 1;
    return lo + int(next_u64() % span);
  }

  // Derive an independent deterministic substream, e.g. one per case.
  Rng child(std::uint64_t stream) const {
    Rng r(state_ ^ (0xd1342543de82ef95ull * (stream + 1)));
    r.next_u64();
    return r;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_int(0, int(i) - 1)]);
  }

private:
  std::uint64_t state_;
};

// Worker count for data-parallel sections; DCHA_THREADS caps it.
int worker_threads();

// Deterministic parallel map: fn(i) for i in [0,n), results independent.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace dcha
