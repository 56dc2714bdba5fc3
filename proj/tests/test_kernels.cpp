#include <doctest.h>

#include <cmath>
#include <vector>

#include "gfn/kernels.hpp"
#include "gfn/rng.hpp"

using namespace gfn;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

bool close(double a, double b, double rel) {
  return std::abs(a - b) <= rel * std::max({std::abs(a), std::abs(b), 1.0});
}

}  // namespace

TEST_CASE("scalar kernels match naive loops") {
  Rng rng(11);
  const auto& ops = kernels::scalar_ops();
  const std::size_t rows = 7, cols = 13;
  const auto w = random_vec(rng, rows * cols);
  const auto x = random_vec(rng, cols);
  const auto bias = random_vec(rng, rows);

  std::vector<double> y(rows, 0.0);
  ops.matvec(y.data(), w.data(), x.data(), bias.data(), rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = bias[r];
    for (std::size_t c = 0; c < cols; ++c) acc += w[r * cols + c] * x[c];
    CHECK(y[r] == doctest::Approx(acc).epsilon(1e-14));
  }

  double sq = 0;
  for (double v : x) sq += v * v;
  CHECK(ops.dot(x.data(), x.data(), cols) == doctest::Approx(sq).epsilon(1e-14));
}

TEST_CASE("avx2 kernels agree with the scalar reference") {
  if (!kernels::avx2_supported()) return;
  const auto& scalar = kernels::scalar_ops();
  const auto& simd = kernels::avx2_ops();
  Rng rng(3);

  for (std::size_t n : {std::size_t{1}, std::size_t{3}, std::size_t{4}, std::size_t{17},
                        std::size_t{64}, std::size_t{257}}) {
    const auto a = random_vec(rng, n);
    const auto b = random_vec(rng, n);
    CHECK(close(scalar.dot(a.data(), b.data(), n), simd.dot(a.data(), b.data(), n), 1e-13));

    auto y1 = random_vec(rng, n);
    auto y2 = y1;
    scalar.axpy(y1.data(), 0.37, a.data(), n);
    simd.axpy(y2.data(), 0.37, a.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(close(y1[i], y2[i], 1e-13));

    std::vector<double> r1(n), r2(n);
    scalar.leaky_relu(r1.data(), a.data(), n, 0.01);
    simd.leaky_relu(r2.data(), a.data(), n, 0.01);
    CHECK(r1 == r2);

    std::vector<double> g1(n), g2(n);
    scalar.leaky_relu_grad(g1.data(), b.data(), a.data(), n, 0.01);
    simd.leaky_relu_grad(g2.data(), b.data(), a.data(), n, 0.01);
    CHECK(g1 == g2);
  }

  const std::size_t rows = 9, cols = 33;
  const auto w = random_vec(rng, rows * cols);
  const auto x = random_vec(rng, cols);
  const auto d = random_vec(rng, rows);
  std::vector<double> y1(rows), y2(rows);
  scalar.matvec(y1.data(), w.data(), x.data(), nullptr, rows, cols);
  simd.matvec(y2.data(), w.data(), x.data(), nullptr, rows, cols);
  for (std::size_t r = 0; r < rows; ++r) CHECK(close(y1[r], y2[r], 1e-13));

  std::vector<double> t1(cols, 0.1), t2(cols, 0.1);
  scalar.matvec_t_acc(t1.data(), w.data(), d.data(), rows, cols);
  simd.matvec_t_acc(t2.data(), w.data(), d.data(), rows, cols);
  for (std::size_t c = 0; c < cols; ++c) CHECK(close(t1[c], t2[c], 1e-13));

  std::vector<double> a1(rows * cols, 0.2), a2(rows * cols, 0.2);
  scalar.rank1_acc(a1.data(), d.data(), x.data(), rows, cols);
  simd.rank1_acc(a2.data(), d.data(), x.data(), rows, cols);
  for (std::size_t i = 0; i < rows * cols; ++i) CHECK(close(a1[i], a2[i], 1e-13));
}

TEST_CASE("adam kernels are bit-identical across backends") {
  if (!kernels::avx2_supported()) return;
  Rng rng(5);
  const std::size_t n = 103;
  const auto grad = random_vec(rng, n);
  auto p1 = random_vec(rng, n);
  auto p2 = p1;
  std::vector<double> m1(n, 0.0), v1(n, 0.0), m2(n, 0.0), v2(n, 0.0);
  kernels::AdamConfig cfg{1e-3, 0.9, 0.999, 1e-8, 1.0 - 0.9, 1.0 - 0.999};
  kernels::scalar_ops().adam_step(p1.data(), grad.data(), m1.data(), v1.data(), n, cfg);
  kernels::avx2_ops().adam_step(p2.data(), grad.data(), m2.data(), v2.data(), n, cfg);
  CHECK(p1 == p2);
  CHECK(m1 == m2);
  CHECK(v1 == v2);
}
