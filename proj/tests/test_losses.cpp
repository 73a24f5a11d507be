#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dcha/losses.hpp"
#include "fd_check.hpp"

using namespace dcha;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

double sim_value(const std::vector<double>& x, const std::vector<double>& y) {
  Tape tape;
  return cosine_sim(tape.tensor({int(x.size())}, x), tape.tensor({int(y.size())}, y)).item();
}

// independent per-row oracle: plain-double Pearson cosine
double sim_oracle(const std::vector<double>& x, const std::vector<double>& y) {
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= double(x.size());
  my /= double(y.size());
  double num = 0, nx = 0, ny = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    num += (x[i] - mx) * (y[i] - my);
    nx += (x[i] - mx) * (x[i] - mx);
    ny += (y[i] - my) * (y[i] - my);
  }
  return num / (std::sqrt(nx) * std::sqrt(ny) + 1e-8);
}

}  // namespace

TEST_CASE("cosine_sim examples") {
  Rng rng(51);
  auto x = random_vec(rng, 9);
  CHECK(sim_value(x, x) == doctest::Approx(1.0).epsilon(1e-6));

  std::vector<double> ax(9);
  for (int i = 0; i < 9; ++i) ax[i] = 2.5 * x[i] + 0.7;  // positive affine map
  CHECK(sim_value(x, ax) == doctest::Approx(sim_value(x, x)).epsilon(1e-9));

  CHECK(sim_value({1, 2, 3, 4}, {4, 3, 2, 1}) == doctest::Approx(-1.0).epsilon(1e-6));

  // zero-variance vector: value ~0 via the epsilon guard, no exception
  CHECK(std::fabs(sim_value({2, 2, 2}, {1, 0, 1})) < 1e-6);

  Tape tape;
  CHECK_THROWS_AS(cosine_sim(tape.full({3}, 1.0), tape.full({4}, 1.0)), Error);
  CHECK_THROWS_AS(cosine_sim(tape.full({1}, 1.0), tape.full({1}, 1.0)), Error);
}

TEST_CASE("cosine_sim gradient check") {
  Rng rng(52);
  auto x0 = random_vec(rng, 12);
  auto yfix = random_vec(rng, 6);
  auto f = [&](const std::vector<double>& x) {
    Tape tape;
    auto xa = tape.tensor({6}, {x.begin(), x.begin() + 6}, true);
    auto ya = tape.tensor({6}, {x.begin() + 6, x.end()}, true);
    return cosine_sim(xa, ya).item();
  };
  auto g = [&](const std::vector<double>& x) {
    Tape tape;
    auto xa = tape.tensor({6}, {x.begin(), x.begin() + 6}, true);
    auto ya = tape.tensor({6}, {x.begin() + 6, x.end()}, true);
    tape.backward(cosine_sim(xa, ya));
    std::vector<double> out = xa.grad();
    out.insert(out.end(), ya.grad().begin(), ya.grad().end());
    return out;
  };
  (void)yfix;
  CHECK(fd::check_grad(f, g, x0) < 1e-3);
}

TEST_CASE("dual-view correlation loss examples") {
  Rng rng(53);
  int c = 4, h = 8, w = 8;
  auto a = random_vec(rng, std::size_t(c) * h * w);
  SUBCASE("identical non-constant inputs give -1") {
    Tape tape;
    auto t = dual_view_corr_loss(tape.tensor({c, h, w}, a), tape.tensor({c, h, w}, a));
    CHECK(t.item() == doctest::Approx(-1.0).epsilon(1e-6));
  }
  SUBCASE("per-row anti-correlated input gives +1") {
    // reflect each row slice about its own mean
    std::vector<double> b(a.size());
    for (int i = 0; i < h; ++i) {
      double m = 0.0;
      for (int ci = 0; ci < c; ++ci)
        for (int j = 0; j < w; ++j) m += a[(ci * h + i) * w + j];
      m /= double(c * w);
      for (int ci = 0; ci < c; ++ci)
        for (int j = 0; j < w; ++j)
          b[(ci * h + i) * w + j] = -a[(ci * h + i) * w + j] + 2.0 * m;
    }
    Tape tape;
    auto t = dual_view_corr_loss(tape.tensor({c, h, w}, a), tape.tensor({c, h, w}, b));
    CHECK(t.item() == doctest::Approx(1.0).epsilon(1e-6));
  }
  SUBCASE("agrees with independent per-row oracle to 1e-12") {
    auto b = random_vec(rng, std::size_t(c) * h * w);
    Tape tape;
    double got =
        dual_view_corr_loss(tape.tensor({c, h, w}, a), tape.tensor({c, h, w}, b)).item();
    double expect = 0.0;
    for (int i = 0; i < h; ++i) {
      std::vector<double> ra, rb;
      for (int ci = 0; ci < c; ++ci)
        for (int j = 0; j < w; ++j) {
          ra.push_back(a[(ci * h + i) * w + j]);
          rb.push_back(b[(ci * h + i) * w + j]);
        }
      expect += sim_oracle(ra, rb);
    }
    expect = -expect / double(h);
    CHECK(std::fabs(got - expect) < 1e-12);
  }
  SUBCASE("shape mismatch rejected") {
    Tape tape;
    CHECK_THROWS_AS(
        dual_view_corr_loss(tape.full({2, 4, 4}, 1.0), tape.full({2, 4, 5}, 1.0)), Error);
  }
}

TEST_CASE("dual-view correlation loss invariants") {
  Rng rng(54);
  int c = 3, h = 5, w = 6;
  auto a = random_vec(rng, std::size_t(c) * h * w);
  auto b = random_vec(rng, std::size_t(c) * h * w);
  SUBCASE("symmetry is exact") {
    Tape tape;
    double ab = dual_view_corr_loss(tape.tensor({c, h, w}, a), tape.tensor({c, h, w}, b)).item();
    double ba = dual_view_corr_loss(tape.tensor({c, h, w}, b), tape.tensor({c, h, w}, a)).item();
    CHECK(ab == ba);
  }
  SUBCASE("bounded in [-1, 1] and invariant under per-row positive affine maps") {
    Tape tape;
    double base =
        dual_view_corr_loss(tape.tensor({c, h, w}, a), tape.tensor({c, h, w}, b)).item();
    CHECK(base >= -1.0);
    CHECK(base <= 1.0);
    auto a2 = a;
    for (int i = 0; i < h; ++i) {
      double scale = 0.3 + 0.2 * i, offs = -1.0 + 0.5 * i;
      for (int ci = 0; ci < c; ++ci)
        for (int j = 0; j < w; ++j) {
          auto& v = a2[(ci * h + i) * w + j];
          v = scale * v + offs;
        }
    }
    double mapped =
        dual_view_corr_loss(tape.tensor({c, h, w}, a2), tape.tensor({c, h, w}, b)).item();
    CHECK(mapped == doctest::Approx(base).epsilon(1e-6));
  }
  SUBCASE("gradient check") {
    auto f = [&](const std::vector<double>& x) {
      Tape tape;
      auto ta = tape.tensor({c, h, w}, {x.begin(), x.begin() + a.size()}, true);
      auto tb = tape.tensor({c, h, w}, {x.begin() + a.size(), x.end()}, true);
      return dual_view_corr_loss(ta, tb).item();
    };
    auto g = [&](const std::vector<double>& x) {
      Tape tape;
      auto ta = tape.tensor({c, h, w}, {x.begin(), x.begin() + a.size()}, true);
      auto tb = tape.tensor({c, h, w}, {x.begin() + a.size(), x.end()}, true);
      tape.backward(dual_view_corr_loss(ta, tb));
      std::vector<double> out = ta.grad();
      out.insert(out.end(), tb.grad().begin(), tb.grad().end());
      return out;
    };
    std::vector<double> x0 = a;
    x0.insert(x0.end(), b.begin(), b.end());
    CHECK(fd::check_grad(f, g, x0) < 1e-3);
  }
}

TEST_CASE("bce examples") {
  Tape tape;
  CHECK(bce(tape.scalar(1.0), 1).item() == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(bce(tape.scalar(0.5), 1).item() == doctest::Approx(std::log(2.0)));
  CHECK(bce(tape.scalar(1.0), 0).item() == doctest::Approx(-std::log(1e-7)).epsilon(1e-6));
  CHECK_THROWS_AS(bce(tape.scalar(0.5), 2), Error);
  // nonnegative across the range
  for (double p = 0.0; p <= 1.0; p += 0.125) {
    CHECK(bce(tape.scalar(p), 0).item() >= 0.0);
    CHECK(bce(tape.scalar(p), 1).item() >= 0.0);
  }
}

TEST_CASE("bce differentiates through the sigmoid producing p") {
  auto f = [&](const std::vector<double>& x) {
    Tape tape;
    auto z = tape.tensor({1}, x, true);
    return bce(sigmoid(z), 1).item();
  };
  auto g = [&](const std::vector<double>& x) {
    Tape tape;
    auto z = tape.tensor({1}, x, true);
    tape.backward(bce(sigmoid(z), 1));
    return z.grad();
  };
  CHECK(fd::check_grad(f, g, {0.3}) < 1e-3);
  CHECK(fd::check_grad(f, g, {-1.2}) < 1e-3);
}

TEST_CASE("total_loss composition") {
  Rng rng(55);
  int c = 2, h = 4, w = 4;
  SUBCASE("corr=-1, clss terms 0 gives total -1") {
    Tape tape;
    auto a = tape.tensor({c, h, w}, random_vec(rng, std::size_t(c) * h * w));
    auto t = total_loss(a, a, tape.scalar(1.0), tape.scalar(1.0), 1);
    auto v = t.values();
    CHECK(v.corr == doctest::Approx(-1.0).epsilon(1e-6));
    CHECK(v.total == doctest::Approx(v.corr + v.clss_cc + v.clss_mlo));
    CHECK(v.total == doctest::Approx(-1.0).epsilon(1e-5));
  }
  SUBCASE("corr 0 (disabled), clss terms ln 2 each") {
    Tape tape;
    auto a = tape.tensor({c, h, w}, random_vec(rng, std::size_t(c) * h * w));
    auto t = total_loss(a, a, tape.scalar(0.5), tape.scalar(0.5), 1, /*use_corr=*/false);
    auto v = t.values();
    CHECK(v.corr == 0.0);
    CHECK(v.total == doctest::Approx(2.0 * std::log(2.0)));
  }
}
