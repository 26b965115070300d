#pragma once

#include <array>
#include <cstddef>

namespace lift3d {

enum class CameraKind { kOrthographic, kPerspective };

// Camera conventions: right-handed camera space with z increasing away from
// the camera; the perspective matrix maps the frustum to NDC with depth in
// [-1, 1] (near plane at -1). The occlusion loss's sign assumes exactly this
// "larger z = farther" convention.
struct CameraModel {
  CameraKind kind = CameraKind::kOrthographic;
  std::array<double, 16> projection{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};

  static CameraModel orthographic();

  // Symmetric frustum given the image-plane half extents at the near clip.
  static CameraModel perspective(double near, double far, double half_width,
                                 double half_height);

  static CameraModel from_projection(const std::array<double, 16>& matrix);
};

// Orthographic: identity on (x, y), z passes through. Perspective: projective
// map through the 4x4 matrix with the homogeneous divide.
std::array<double, 3> project(const std::array<double, 3>& point, const CameraModel& camera);
std::array<double, 3> unproject(const std::array<double, 3>& ndc, const CameraModel& camera);

// Gauss-Jordan inverse used for unprojection; throws InvalidInputError when
// the matrix is singular.
std::array<double, 16> invert4(const std::array<double, 16>& m);

}  // namespace lift3d
