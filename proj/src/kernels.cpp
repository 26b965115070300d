#include "kernels.hpp"

#include <algorithm>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace lift3d::kernels {

namespace {

constexpr std::size_t kSerialFlops = 1u << 16;

// Tiles sized so a B block stays cache-resident while a thread walks its rows.
constexpr std::size_t kTileK = 128;
constexpr std::size_t kTileN = 512;

struct RowRange {
  std::size_t lo, hi;
};

inline RowRange my_rows(std::size_t m) {
#ifdef _OPENMP
  const std::size_t nt = static_cast<std::size_t>(omp_get_num_threads());
  const std::size_t tid = static_cast<std::size_t>(omp_get_thread_num());
  return {m * tid / nt, m * (tid + 1) / nt};
#else
  return {0, m};
#endif
}

// C row tile += sum of four axpys; the k-unroll quarters the C stores.
inline void axpy_block(const double* arow, const double* b, double* crow, std::size_t kt,
                       std::size_t kend, std::size_t jt, std::size_t jend, std::size_t n) {
  std::size_t kk = kt;
  for (; kk + 4 <= kend; kk += 4) {
    const double a0 = arow[kk], a1 = arow[kk + 1], a2 = arow[kk + 2], a3 = arow[kk + 3];
    const double* b0 = b + kk * n;
    const double* b1 = b0 + n;
    const double* b2 = b1 + n;
    const double* b3 = b2 + n;
    for (std::size_t j = jt; j < jend; ++j)
      crow[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
  }
  for (; kk < kend; ++kk) {
    const double aik = arow[kk];
    const double* brow = b + kk * n;
    for (std::size_t j = jt; j < jend; ++j) crow[j] += aik * brow[j];
  }
}

void gemm_nn_rows(const double* a, const double* b, double* c, std::size_t lo, std::size_t hi,
                  std::size_t k, std::size_t n, bool accumulate) {
  if (!accumulate)
    for (std::size_t i = lo; i < hi; ++i)
      for (std::size_t j = 0; j < n; ++j) c[i * n + j] = 0.0;
  for (std::size_t kt = 0; kt < k; kt += kTileK) {
    const std::size_t kend = std::min(k, kt + kTileK);
    for (std::size_t jt = 0; jt < n; jt += kTileN) {
      const std::size_t jend = std::min(n, jt + kTileN);
      for (std::size_t i = lo; i < hi; ++i)
        axpy_block(a + i * k, b, c + i * n, kt, kend, jt, jend, n);
    }
  }
}

}  // namespace

void gemm_nn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate) {
  if (m * k * n < kSerialFlops) {
    gemm_nn_rows(a, b, c, 0, m, k, n, accumulate);
    return;
  }
#pragma omp parallel
  {
    const RowRange rows = my_rows(m);
    gemm_nn_rows(a, b, c, rows.lo, rows.hi, k, n, accumulate);
  }
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate) {
  if (m * k * n < kSerialFlops) {
    for (std::size_t i = 0; i < m; ++i) {
      const double* arow = a + i * k;
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        const double acc = dot(arow, b + j * k, k);
        crow[j] = accumulate ? crow[j] + acc : acc;
      }
    }
    return;
  }
  // Tile the B rows so the slice a thread dots against stays in cache.
  const std::size_t tile_j = std::max<std::size_t>(16, (1u << 18) / (8 * k));
#pragma omp parallel
  {
    const RowRange rows = my_rows(m);
    for (std::size_t jt = 0; jt < n; jt += tile_j) {
      const std::size_t jend = std::min(n, jt + tile_j);
      for (std::size_t i = rows.lo; i < rows.hi; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t j = jt; j < jend; ++j) {
          const double acc = dot(arow, b + j * k, k);
          crow[j] = accumulate ? crow[j] + acc : acc;
        }
      }
    }
  }
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate) {
  if (m * k * n < kSerialFlops) {
    for (std::size_t i = 0; i < m; ++i) {
      double* crow = c + i * n;
      if (!accumulate)
        for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) {
        const double aki = a[kk * m + i];
        const double* brow = b + kk * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += aki * brow[j];
      }
    }
    return;
  }
  // Transpose A once (strided reads happen a single time instead of once per
  // output row), then reuse the tiled NN kernel.
  std::vector<double> a_t(m * k);
#pragma omp parallel
  {
    const RowRange rows = my_rows(m);
    for (std::size_t i = rows.lo; i < rows.hi; ++i) {
      double* trow = a_t.data() + i * k;
      for (std::size_t kk = 0; kk < k; ++kk) trow[kk] = a[kk * m + i];
    }
#pragma omp barrier
    gemm_nn_rows(a_t.data(), b, c, rows.lo, rows.hi, k, n, accumulate);
  }
}

}  // namespace lift3d::kernels
