// AVX2 + FMA variants of the dense kernels, 4 doubles per lane.
// Compiled with -mavx2 -mfma; only reached through the runtime dispatch,
// which checks cpu support first.

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cmath>
#include <cstddef>

#include "gfn/kernels.hpp"

namespace gfn::kernels {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d swapped = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, swapped));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
  double tail = 0.0;
  for (; i < n; ++i) tail += a[i] * b[i];
  return hsum(acc) + tail;
}

void axpy_avx2(double* y, double alpha, const double* x, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void matvec_avx2(double* y, const double* w, const double* x, const double* bias,
                 std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double acc = dot_avx2(w + r * cols, x, cols);
    y[r] = bias ? acc + bias[r] : acc;
  }
}

void matvec_t_acc_avx2(double* y, const double* w, const double* d, std::size_t rows,
                       std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    if (d[r] == 0.0) continue;
    axpy_avx2(y, d[r], w + r * cols, cols);
  }
}

void rank1_acc_avx2(double* g, const double* d, const double* x, std::size_t rows,
                    std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    if (d[r] == 0.0) continue;
    axpy_avx2(g + r * cols, d[r], x, cols);
  }
}

void leaky_relu_avx2(double* y, const double* x, std::size_t n, double slope) {
  const __m256d zero = _mm256_setzero_pd();
  const __m256d vs = _mm256_set1_pd(slope);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vx = _mm256_loadu_pd(x + i);
    __m256d neg = _mm256_mul_pd(vx, vs);
    __m256d mask = _mm256_cmp_pd(vx, zero, _CMP_GT_OQ);
    _mm256_storeu_pd(y + i, _mm256_blendv_pd(neg, vx, mask));
  }
  for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : slope * x[i];
}

void leaky_relu_grad_avx2(double* dx, const double* dy, const double* x, std::size_t n,
                          double slope) {
  const __m256d zero = _mm256_setzero_pd();
  const __m256d vs = _mm256_set1_pd(slope);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vdy = _mm256_loadu_pd(dy + i);
    __m256d vx = _mm256_loadu_pd(x + i);
    __m256d neg = _mm256_mul_pd(vdy, vs);
    __m256d mask = _mm256_cmp_pd(vx, zero, _CMP_GT_OQ);
    _mm256_storeu_pd(dx + i, _mm256_blendv_pd(neg, vdy, mask));
  }
  for (; i < n; ++i) dx[i] = x[i] > 0.0 ? dy[i] : slope * dy[i];
}

// No FMA here: per-element mul/add keeps this bit-identical to the scalar
// path, which the equivalence tests pin down.
void adam_step_avx2(double* p, const double* g, double* m, double* v, std::size_t n,
                    const AdamConfig& cfg) {
  const __m256d b1 = _mm256_set1_pd(cfg.beta1);
  const __m256d b2 = _mm256_set1_pd(cfg.beta2);
  const __m256d ob1 = _mm256_set1_pd(1.0 - cfg.beta1);
  const __m256d ob2 = _mm256_set1_pd(1.0 - cfg.beta2);
  const __m256d bias1 = _mm256_set1_pd(cfg.bias1);
  const __m256d bias2 = _mm256_set1_pd(cfg.bias2);
  const __m256d lr = _mm256_set1_pd(cfg.lr);
  const __m256d eps = _mm256_set1_pd(cfg.eps);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vg = _mm256_loadu_pd(g + i);
    __m256d vm = _mm256_add_pd(_mm256_mul_pd(b1, _mm256_loadu_pd(m + i)), _mm256_mul_pd(ob1, vg));
    __m256d vv = _mm256_add_pd(_mm256_mul_pd(b2, _mm256_loadu_pd(v + i)),
                               _mm256_mul_pd(ob2, _mm256_mul_pd(vg, vg)));
    _mm256_storeu_pd(m + i, vm);
    _mm256_storeu_pd(v + i, vv);
    __m256d mhat = _mm256_div_pd(vm, bias1);
    __m256d vhat = _mm256_div_pd(vv, bias2);
    __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(vhat), eps);
    __m256d step = _mm256_div_pd(_mm256_mul_pd(lr, mhat), denom);
    _mm256_storeu_pd(p + i, _mm256_sub_pd(_mm256_loadu_pd(p + i), step));
  }
  for (; i < n; ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * (g[i] * g[i]);
    p[i] -= cfg.lr * (m[i] / cfg.bias1) / (std::sqrt(v[i] / cfg.bias2) + cfg.eps);
  }
}

}  // namespace

const Ops& avx2_ops() {
  static const Ops ops = {
      "avx2",       dot_avx2,        axpy_avx2,
      matvec_avx2,  matvec_t_acc_avx2, rank1_acc_avx2,
      leaky_relu_avx2, leaky_relu_grad_avx2, adam_step_avx2,
  };
  return ops;
}

}  // namespace gfn::kernels

#endif  // x86_64
