#include <cmath>
#include <cstddef>

#include "gfn/kernels.hpp"

namespace gfn::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_scalar(double* y, double alpha, const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void matvec_scalar(double* y, const double* w, const double* x, const double* bias,
                   std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    const double* row = w + r * cols;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
    y[r] = bias ? acc + bias[r] : acc;
  }
}

void matvec_t_acc_scalar(double* y, const double* w, const double* d, std::size_t rows,
                         std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double dr = d[r];
    if (dr == 0.0) continue;
    const double* row = w + r * cols;
    for (std::size_t c = 0; c < cols; ++c) y[c] += dr * row[c];
  }
}

void rank1_acc_scalar(double* g, const double* d, const double* x, std::size_t rows,
                      std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double dr = d[r];
    if (dr == 0.0) continue;
    double* row = g + r * cols;
    for (std::size_t c = 0; c < cols; ++c) row[c] += dr * x[c];
  }
}

void leaky_relu_scalar(double* y, const double* x, std::size_t n, double slope) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : slope * x[i];
}

void leaky_relu_grad_scalar(double* dx, const double* dy, const double* x, std::size_t n,
                            double slope) {
  for (std::size_t i = 0; i < n; ++i) dx[i] = x[i] > 0.0 ? dy[i] : slope * dy[i];
}

void adam_step_scalar(double* p, const double* g, double* m, double* v, std::size_t n,
                      const AdamConfig& cfg) {
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * (g[i] * g[i]);
    const double mhat = m[i] / cfg.bias1;
    const double vhat = v[i] / cfg.bias2;
    p[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

}  // namespace

const Ops& scalar_ops() {
  static const Ops ops = {
      "scalar",       dot_scalar,        axpy_scalar,
      matvec_scalar,  matvec_t_acc_scalar, rank1_acc_scalar,
      leaky_relu_scalar, leaky_relu_grad_scalar, adam_step_scalar,
  };
  return ops;
}

}  // namespace gfn::kernels
