#include "lift3d/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kernels.hpp"
#include "lift3d/errors.hpp"

namespace lift3d {

namespace {

constexpr int kMaxSweeps = 100;
// Pairwise rotation trigger, relative to the column norms (de Rijk style).
// This is strictly stronger than the absolute criterion 1e-12 * ||A||_F^2 on
// the Gram off-diagonals, which therefore also holds at exit; the relative
// form keeps small singular directions mutually orthogonal as well.
constexpr double kRelTolerance = 1e-14;

// One-sided Jacobi on a tall matrix held column-major: `work` has m*n
// entries, column j at work[j*m]. V accumulates the right rotations
// (n x n, column-major as well).
void jacobi_orthogonalize(std::vector<double>& work, std::vector<double>& v,
                          std::size_t m, std::size_t n) {
  double fro2 = 0.0;
  for (double x : work) fro2 += x * x;
  // Columns below the numerical-rank floor are flushed to exact zero;
  // otherwise their norms decay geometrically sweep after sweep while
  // staying correlated, and the iteration never terminates.
  const double zero2 = fro2 * 1e-32;

  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        double* ci = work.data() + i * m;
        double* cj = work.data() + j * m;
        const double dot_ii = kernels::dot(ci, ci, m);
        const double dot_jj = kernels::dot(cj, cj, m);
        const double dot_ij = kernels::dot(ci, cj, m);
        if (dot_ii <= zero2)
          for (std::size_t k = 0; k < m; ++k) ci[k] = 0.0;
        if (dot_jj <= zero2)
          for (std::size_t k = 0; k < m; ++k) cj[k] = 0.0;
        if (dot_ii <= zero2 || dot_jj <= zero2) continue;
        if (std::abs(dot_ij) <= kRelTolerance * std::sqrt(dot_ii) * std::sqrt(dot_jj))
          continue;
        rotated = true;

        const double tau = (dot_jj - dot_ii) / (2.0 * dot_ij);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t k = 0; k < m; ++k) {
          const double a = ci[k], b = cj[k];
          ci[k] = c * a - s * b;
          cj[k] = s * a + c * b;
        }
        double* vi = v.data() + i * n;
        double* vj = v.data() + j * n;
        for (std::size_t k = 0; k < n; ++k) {
          const double a = vi[k], b = vj[k];
          vi[k] = c * a - s * b;
          vj[k] = s * a + c * b;
        }
      }
    }
    if (!rotated) return;
  }
  throw NumericError("svd: Jacobi sweeps did not converge within cap");
}

// Thin SVD of a tall (m >= n) matrix given column-major.
void svd_tall(std::vector<double> work, std::size_t m, std::size_t n,
              Matrix& u_out, std::vector<double>& sigma_out, Matrix& v_out) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;

  jacobi_orthogonalize(work, v, m, n);

  std::vector<double> sigma(n);
  for (std::size_t j = 0; j < n; ++j) {
    double norm2 = 0.0;
    const double* col = work.data() + j * m;
    for (std::size_t k = 0; k < m; ++k) norm2 += col[k] * col[k];
    sigma[j] = std::sqrt(norm2);
  }

  // Descending sort; ties keep the lower original index first.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sigma[a] > sigma[b]; });

  Matrix u(m, n);
  Matrix vt_result(n, n);
  sigma_out.assign(n, 0.0);
  std::vector<double> u_cols(m * n, 0.0);  // column-major normalized U

  for (std::size_t dst = 0; dst < n; ++dst) {
    const std::size_t src = order[dst];
    sigma_out[dst] = sigma[src];
    const double* col = work.data() + src * m;
    double* ucol = u_cols.data() + dst * m;
    if (sigma[src] > 0.0) {
      const double inv = 1.0 / sigma[src];
      for (std::size_t k = 0; k < m; ++k) ucol[k] = col[k] * inv;
    } else {
      // Null direction: complete U with a deterministic orthonormal column.
      for (std::size_t cand = 0; cand < m; ++cand) {
        for (std::size_t k = 0; k < m; ++k) ucol[k] = (k == cand) ? 1.0 : 0.0;
        for (std::size_t prev = 0; prev < dst; ++prev) {
          const double* pcol = u_cols.data() + prev * m;
          double dot = 0.0;
          for (std::size_t k = 0; k < m; ++k) dot += pcol[k] * ucol[k];
          for (std::size_t k = 0; k < m; ++k) ucol[k] -= dot * pcol[k];
        }
        double norm2 = 0.0;
        for (std::size_t k = 0; k < m; ++k) norm2 += ucol[k] * ucol[k];
        if (norm2 > 0.25) {
          const double inv = 1.0 / std::sqrt(norm2);
          for (std::size_t k = 0; k < m; ++k) ucol[k] *= inv;
          break;
        }
      }
    }

    // Sign convention: largest-magnitude entry of the U column non-negative.
    std::size_t arg = 0;
    double best = -1.0;
    for (std::size_t k = 0; k < m; ++k) {
      const double mag = std::abs(ucol[k]);
      if (mag > best) {
        best = mag;
        arg = k;
      }
    }
    const double flip = ucol[arg] < 0.0 ? -1.0 : 1.0;
    for (std::size_t k = 0; k < m; ++k) u(k, dst) = flip * ucol[k];
    if (flip < 0.0)
      for (std::size_t k = 0; k < m; ++k) ucol[k] = -ucol[k];
    const double* vcol = v.data() + src * n;
    for (std::size_t k = 0; k < n; ++k) vt_result(k, dst) = flip * vcol[k];
  }

  u_out = std::move(u);
  v_out = std::move(vt_result);
}

}  // namespace

SvdResult svd(const Matrix& a) {
  if (a.rows == 0 || a.cols == 0) throw InvalidInputError("svd: empty matrix");
  if (!all_finite(a)) throw InvalidInputError("svd: non-finite input");

  SvdResult result;
  if (a.rows >= a.cols) {
    std::vector<double> work(a.rows * a.cols);
    for (std::size_t i = 0; i < a.rows; ++i)
      for (std::size_t j = 0; j < a.cols; ++j) work[j * a.rows + i] = a(i, j);
    svd_tall(std::move(work), a.rows, a.cols, result.u, result.sigma, result.v);
  } else {
    // Wide: factor A^T = U' S V'^T, then A = V' S U'^T.
    std::vector<double> work(a.rows * a.cols);
    for (std::size_t i = 0; i < a.rows; ++i)
      for (std::size_t j = 0; j < a.cols; ++j) work[i * a.cols + j] = a(i, j);
    Matrix ut, vt;
    svd_tall(std::move(work), a.cols, a.rows, ut, result.sigma, vt);
    result.u = std::move(vt);
    result.v = std::move(ut);
    // Re-apply the sign convention in terms of the new U.
    const std::size_t r = result.sigma.size();
    for (std::size_t j = 0; j < r; ++j) {
      std::size_t arg = 0;
      double best = -1.0;
      for (std::size_t k = 0; k < result.u.rows; ++k) {
        const double mag = std::abs(result.u(k, j));
        if (mag > best) {
          best = mag;
          arg = k;
        }
      }
      if (result.u(arg, j) < 0.0) {
        for (std::size_t k = 0; k < result.u.rows; ++k) result.u(k, j) = -result.u(k, j);
        for (std::size_t k = 0; k < result.v.rows; ++k) result.v(k, j) = -result.v(k, j);
      }
    }
  }
  return result;
}

double det3(const std::array<double, 9>& m) {
  return m[0] * (m[4] * m[8] - m[5] * m[7]) -
         m[1] * (m[3] * m[8] - m[5] * m[6]) +
         m[2] * (m[3] * m[7] - m[4] * m[6]);
}

double det3(const Matrix& m) {
  if (m.rows != 3 || m.cols != 3) throw ShapeError("det3: matrix must be 3x3");
  return det3(std::array<double, 9>{m.data[0], m.data[1], m.data[2],
                                    m.data[3], m.data[4], m.data[5],
                                    m.data[6], m.data[7], m.data[8]});
}

KabschResult kabsch_umeyama(const Matrix& p, const Matrix& q) {
  if (p.cols != 3 || q.cols != 3) throw InvalidInputError("kabsch_umeyama: point sets must be k x 3");
  if (p.rows != q.rows) throw InvalidInputError("kabsch_umeyama: point counts differ");
  if (p.rows < 3) throw InvalidInputError("kabsch_umeyama: need at least 3 points");
  if (!all_finite(p) || !all_finite(q)) throw InvalidInputError("kabsch_umeyama: non-finite input");

  // H = P^T Q, 3x3 cross-covariance.
  Matrix h(3, 3);
  for (std::size_t k = 0; k < p.rows; ++k)
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) h(i, j) += p(k, i) * q(k, j);

  const SvdResult f = svd(h);

  KabschResult result;
  result.degenerate = f.sigma[1] <= 1e-12 * std::max(f.sigma[0], 1e-300);

  // R = U diag(1, 1, det(U V^T)) V^T.
  Matrix uvt = matmul(f.u, transposed(f.v));
  const double d = det3(uvt) < 0.0 ? -1.0 : 1.0;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < 3; ++k) {
        const double scale = (k == 2) ? d : 1.0;
        acc += f.u(i, k) * scale * f.v(j, k);
      }
      result.rotation(i, j) = acc;
    }
  return result;
}

}  // namespace lift3d
