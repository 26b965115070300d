#pragma once

#include <vector>

#include "lift3d/matrix.hpp"

namespace lift3d {

// Thin SVD A = U * diag(sigma) * V^T with r = min(rows, cols) columns in
// U (rows x r) and V (cols x r). Singular values are sorted descending and
// the largest-magnitude entry of each U column is made non-negative so the
// factorization is reproducible.
struct SvdResult {
  Matrix u;
  std::vector<double> sigma;
  Matrix v;
};

// One-sided Jacobi. Deterministic cyclic sweeps, capped at 100; convergence
// when every off-diagonal Gram entry falls below 1e-12 * ||A||_F^2.
SvdResult svd(const Matrix& a);

// Cofactor-expansion determinant of a 3x3 matrix (row-major array).
double det3(const std::array<double, 9>& m);
double det3(const Matrix& m);

// Rotation R in SO(3) minimizing ||P*R - Q||_F for centered k x 3 point sets
// (post-multiplication convention). `degenerate` flags rank(P^T Q) < 2, where
// the minimizer is not unique; the returned R is still a valid minimizer.
struct KabschResult {
  Rotation3 rotation;
  bool degenerate = false;
};

KabschResult kabsch_umeyama(const Matrix& p, const Matrix& q);

}  // namespace lift3d
