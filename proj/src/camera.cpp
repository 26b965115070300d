#include "lift3d/camera.hpp"

#include <cmath>

#include "lift3d/errors.hpp"

namespace lift3d {

CameraModel CameraModel::orthographic() { return CameraModel{}; }

CameraModel CameraModel::perspective(double near, double far, double half_width,
                                     double half_height) {
  if (!(near > 0.0) || !(far > near))
    throw InvalidInputError("perspective camera: need 0 < near < far");
  if (!(half_width > 0.0) || !(half_height > 0.0))
    throw InvalidInputError("perspective camera: image plane extents must be positive");
  CameraModel cam;
  cam.kind = CameraKind::kPerspective;
  cam.projection = {near / half_width, 0, 0, 0,
                    0, near / half_height, 0, 0,
                    0, 0, (far + near) / (far - near), -2.0 * far * near / (far - near),
                    0, 0, 1, 0};
  return cam;
}

CameraModel CameraModel::from_projection(const std::array<double, 16>& matrix) {
  CameraModel cam;
  cam.kind = CameraKind::kPerspective;
  cam.projection = matrix;
  invert4(matrix);  // validates invertibility
  return cam;
}

namespace {

std::array<double, 4> apply4(const std::array<double, 16>& m, const std::array<double, 4>& p) {
  std::array<double, 4> out{};
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) out[i] += m[i * 4 + j] * p[j];
  return out;
}

}  // namespace

std::array<double, 16> invert4(const std::array<double, 16>& m) {
  // Gauss-Jordan with partial pivoting on [M | I].
  double a[4][8];
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      a[i][j] = m[i * 4 + j];
      a[i][j + 4] = i == j ? 1.0 : 0.0;
    }
  }
  for (std::size_t col = 0; col < 4; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < 4; ++r)
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    if (std::abs(a[pivot][col]) < 1e-14)
      throw InvalidInputError("invert4: singular projection matrix");
    if (pivot != col)
      for (std::size_t j = 0; j < 8; ++j) std::swap(a[pivot][j], a[col][j]);
    const double inv = 1.0 / a[col][col];
    for (std::size_t j = 0; j < 8; ++j) a[col][j] *= inv;
    for (std::size_t r = 0; r < 4; ++r) {
      if (r == col) continue;
      const double f = a[r][col];
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < 8; ++j) a[r][j] -= f * a[col][j];
    }
  }
  std::array<double, 16> out;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) out[i * 4 + j] = a[i][j + 4];
  return out;
}

std::array<double, 3> project(const std::array<double, 3>& point, const CameraModel& camera) {
  if (camera.kind == CameraKind::kOrthographic) return point;
  const std::array<double, 4> h = apply4(camera.projection, {point[0], point[1], point[2], 1.0});
  if (std::abs(h[3]) < 1e-300) throw DomainError("project: zero homogeneous w");
  return {h[0] / h[3], h[1] / h[3], h[2] / h[3]};
}

std::array<double, 3> unproject(const std::array<double, 3>& ndc, const CameraModel& camera) {
  if (camera.kind == CameraKind::kOrthographic) return ndc;
  const std::array<double, 16> inv = invert4(camera.projection);
  const std::array<double, 4> h = apply4(inv, {ndc[0], ndc[1], ndc[2], 1.0});
  if (std::abs(h[3]) < 1e-300) throw DomainError("unproject: zero homogeneous w");
  return {h[0] / h[3], h[1] / h[3], h[2] / h[3]};
}

}  // namespace lift3d
