#pragma once

#include <cstddef>

// Internal dense kernels. Every output element is produced by exactly one
// thread with a fixed summation order, so results are bit-identical across
// runs regardless of thread count.

namespace lift3d::kernels {

// Dot product over 8 independent lanes; the lane split keeps the reduction
// order fixed while letting the compiler vectorize it.
inline double dot(const double* a, const double* b, std::size_t n) {
  double lanes[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (std::size_t l = 0; l < 8; ++l) lanes[l] += a[i + l] * b[i + l];
  double acc = ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) +
               ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

// C = A(m,k) * B(k,n), optionally accumulating into C.
void gemm_nn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate);

// C = A(m,k) * B(n,k)^T.
void gemm_nt(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate);

// C = A(k,m)^T * B(k,n).
void gemm_tn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate);

}  // namespace lift3d::kernels
