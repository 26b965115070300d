#pragma once

#include <array>
#include <cstddef>
#include <vector>

namespace lift3d {

// Dense row-major matrix of doubles. Small/medium sizes only (a few hundred
// rows or columns); the geometric kernels in linalg.hpp operate on these.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // row-major, rows*cols entries

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  Matrix(std::size_t r, std::size_t c, std::vector<double> values);

  static Matrix identity(std::size_t n);

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transposed(const Matrix& a);
double frobenius_norm(const Matrix& a);
bool all_finite(const Matrix& a);

// 3x3 rotation matrix, row-major.
struct Rotation3 {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  double operator()(std::size_t i, std::size_t j) const { return m[i * 3 + j]; }
  double& operator()(std::size_t i, std::size_t j) { return m[i * 3 + j]; }

  std::array<double, 3> apply(const std::array<double, 3>& p) const;

  // Max deviation from R^T R = I plus |det - 1|; 0 for an exact rotation.
  double orthogonality_defect() const;
};

Rotation3 rotation_from_axis_angle(const std::array<double, 3>& axis, double angle);
Rotation3 compose(const Rotation3& a, const Rotation3& b);

}  // namespace lift3d
