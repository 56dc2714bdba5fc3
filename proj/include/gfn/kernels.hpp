#pragma once

#include <cstddef>
#include <string_view>

namespace gfn::kernels {

// Precomputed per-step Adam scalars; bias corrections are 1 - beta^t.
struct AdamConfig {
  double lr;
  double beta1;
  double beta2;
  double eps;
  double bias1;
  double bias2;
};

// Dense inner loops used by the MLP and the optimizer. One table per
// backend; the active one is picked once at startup from CPU features
// (override with GFNLAB_KERNELS=scalar|avx2).
struct Ops {
  const char* name;
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double* y, double alpha, const double* x, std::size_t n);
  // y = W x (+ bias when non-null); W row-major [rows x cols]
  void (*matvec)(double* y, const double* w, const double* x, const double* bias,
                 std::size_t rows, std::size_t cols);
  // y += W^T d; W row-major [rows x cols], d has rows entries, y has cols
  void (*matvec_t_acc)(double* y, const double* w, const double* d, std::size_t rows,
                       std::size_t cols);
  // G += d x^T (outer product accumulate); G row-major [rows x cols]
  void (*rank1_acc)(double* g, const double* d, const double* x, std::size_t rows,
                    std::size_t cols);
  void (*leaky_relu)(double* y, const double* x, std::size_t n, double slope);
  // dx = dy * (x > 0 ? 1 : slope)
  void (*leaky_relu_grad)(double* dx, const double* dy, const double* x, std::size_t n,
                          double slope);
  void (*adam_step)(double* p, const double* g, double* m, double* v, std::size_t n,
                    const AdamConfig& cfg);
};

const Ops& scalar_ops();
#if defined(__x86_64__) || defined(_M_X64)
const Ops& avx2_ops();
#endif

bool avx2_supported();

// Resolved once; subsequent calls return the same table.
const Ops& active();

// Test hook. Throws if the backend is unknown or unsupported on this CPU.
void force_backend(std::string_view name);

}  // namespace gfn::kernels
