#pragma once

#include <cmath>
#include <cstddef>

namespace referee::num {

// Shared dense kernels. The tape and the plain (tape-free) GCN forward both
// route through these so the two paths agree bit for bit.

// C (n x m) += A (n x k) * B (k x m), fixed ikj order.
inline void matmul_accum(const double* A, const double* B, double* C,
                         std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* a = A + i * k;
    double* c = C + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[p];
      const double* b = B + p * m;
      for (std::size_t j = 0; j < m; ++j) c[j] += av * b[j];
    }
  }
}

// y = softmax(x) for one row of length m (max-shifted).
inline void softmax_row(const double* x, double* y, std::size_t m) {
  double mx = x[0];
  for (std::size_t j = 1; j < m; ++j) mx = std::max(mx, x[j]);
  double s = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    y[j] = std::exp(x[j] - mx);
    s += y[j];
  }
  for (std::size_t j = 0; j < m; ++j) y[j] /= s;
}

}  // namespace referee::num
