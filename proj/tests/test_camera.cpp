#include <doctest.h>

#include <cmath>

#include "lift3d/camera.hpp"
#include "lift3d/errors.hpp"
#include "lift3d/rng.hpp"

using namespace lift3d;

TEST_CASE("orthographic round trip is the identity") {
  const CameraModel cam = CameraModel::orthographic();
  const std::array<double, 3> p{0.3, -1.2, 4.5};
  CHECK(project(p, cam) == p);
  CHECK(unproject(project(p, cam), cam) == p);
}

TEST_CASE("perspective projection maps the near plane to NDC z = -1") {
  const CameraModel cam = CameraModel::perspective(0.5, 10.0, 0.5, 0.5);
  const auto near_point = project({0.1, -0.2, 0.5}, cam);
  CHECK(near_point[2] == doctest::Approx(-1.0).epsilon(1e-12));
  const auto far_point = project({0.0, 0.0, 10.0}, cam);
  CHECK(far_point[2] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("perspective project/unproject round trip on random frustum points") {
  const CameraModel cam = CameraModel::perspective(0.5, 20.0, 0.4, 0.3);
  Rng rng(3);
  for (int t = 0; t < 100; ++t) {
    const double z = rng.uniform(0.6, 19.0);
    // stay inside the frustum: |x| < half_width * z / near
    const double x = rng.uniform(-0.3, 0.3) * z / 0.5 * 0.4;
    const double y = rng.uniform(-0.3, 0.3) * z / 0.5 * 0.3;
    const std::array<double, 3> p{x, y, z};
    const auto ndc = project(p, cam);
    CHECK(std::abs(ndc[0]) <= 1.0 + 1e-9);
    CHECK(std::abs(ndc[2]) <= 1.0 + 1e-9);
    const auto back = unproject(ndc, cam);
    for (std::size_t a = 0; a < 3; ++a) CHECK(back[a] == doctest::Approx(p[a]).epsilon(1e-10));
  }
}

TEST_CASE("projection rejects zero homogeneous w") {
  const CameraModel cam = CameraModel::perspective(0.5, 10.0, 0.5, 0.5);
  CHECK_THROWS_AS(project({0.0, 0.0, 0.0}, cam), DomainError);
}

TEST_CASE("camera construction validates input") {
  CHECK_THROWS_AS(CameraModel::perspective(-1.0, 10.0, 0.5, 0.5), InvalidInputError);
  CHECK_THROWS_AS(CameraModel::perspective(1.0, 0.5, 0.5, 0.5), InvalidInputError);
  std::array<double, 16> singular{};
  CHECK_THROWS_AS(CameraModel::from_projection(singular), InvalidInputError);
}

TEST_CASE("invert4 matches the identity on a known matrix") {
  const CameraModel cam = CameraModel::perspective(1.0, 5.0, 0.5, 0.5);
  const auto inv = invert4(cam.projection);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < 4; ++t) acc += cam.projection[i * 4 + t] * inv[t * 4 + j];
      CHECK(acc == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-12));
    }
}
