#include <doctest.h>

#include <cmath>

#include "lift3d/errors.hpp"
#include "lift3d/linalg.hpp"
#include "lift3d/rng.hpp"
#include "support/test_utils.hpp"

using namespace lift3d;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (double& x : m.data) x = rng.uniform(-1.0, 1.0);
  return m;
}

double reconstruction_error(const Matrix& a, const SvdResult& f) {
  const std::size_t r = f.sigma.size();
  Matrix rec(a.rows, a.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < r; ++t) acc += f.u(i, t) * f.sigma[t] * f.v(j, t);
      rec(i, j) = acc;
    }
  double diff2 = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = rec.data[i] - a.data[i];
    diff2 += d * d;
  }
  return std::sqrt(diff2);
}

double max_orthonormality_defect(const Matrix& m) {
  double worst = 0.0;
  for (std::size_t i = 0; i < m.cols; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < m.rows; ++k) dot += m(k, i) * m(k, j);
      worst = std::max(worst, std::abs(dot - (i == j ? 1.0 : 0.0)));
    }
  return worst;
}

double alignment_objective(const Matrix& p, const Matrix& q, const Rotation3& r) {
  double acc = 0.0;
  for (std::size_t k = 0; k < p.rows; ++k) {
    for (std::size_t j = 0; j < 3; ++j) {
      double pr = 0.0;
      for (std::size_t i = 0; i < 3; ++i) pr += p(k, i) * r(i, j);
      const double d = pr - q(k, j);
      acc += d * d;
    }
  }
  return acc;
}

Rotation3 random_rotation(Rng& rng) {
  const std::array<double, 3> axis{rng.normal(), rng.normal(), rng.normal()};
  return rotation_from_axis_angle(axis, rng.uniform(0.0, 2.0 * M_PI));
}

}  // namespace

TEST_CASE("svd identity") {
  const SvdResult f = svd(Matrix::identity(3));
  for (std::size_t i = 0; i < 3; ++i) CHECK(f.sigma[i] == doctest::Approx(1.0));
  // U and V agree with I up to a shared column sign.
  for (std::size_t j = 0; j < 3; ++j)
    for (std::size_t i = 0; i < 3; ++i) {
      const double expected = (f.u(j, j) < 0 ? -1.0 : 1.0) * (i == j ? 1.0 : 0.0);
      CHECK(f.u(i, j) == doctest::Approx(expected).epsilon(1e-12));
      CHECK(f.v(i, j) == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("svd diagonal sorted descending") {
  Matrix a(3, 3);
  a(0, 0) = 1.0;
  a(1, 1) = 3.0;
  a(2, 2) = 2.0;
  const SvdResult f = svd(a);
  CHECK(f.sigma[0] == doctest::Approx(3.0));
  CHECK(f.sigma[1] == doctest::Approx(2.0));
  CHECK(f.sigma[2] == doctest::Approx(1.0));
}

TEST_CASE("svd reconstruction oracle on random matrices") {
  Rng rng(42);
  for (const auto& [rows, cols] : {std::pair<std::size_t, std::size_t>{6, 12},
                                  {12, 6},
                                  {1, 5},
                                  {64, 64},
                                  {37, 80},
                                  {128, 17}}) {
    const Matrix a = random_matrix(rows, cols, rng);
    const SvdResult f = svd(a);
    const double fro = frobenius_norm(a);
    CHECK(reconstruction_error(a, f) <= 1e-8 * std::max(1.0, fro));
    CHECK(max_orthonormality_defect(f.u) <= 1e-9);
    CHECK(max_orthonormality_defect(f.v) <= 1e-9);
    for (std::size_t i = 0; i + 1 < f.sigma.size(); ++i) CHECK(f.sigma[i] >= f.sigma[i + 1]);
    for (double s : f.sigma) CHECK(s >= 0.0);
  }
}

TEST_CASE("svd rank-deficient and zero matrices keep orthonormal factors") {
  Rng rng(7);
  Matrix a(8, 5);
  // rank 2: outer products of two random vector pairs
  for (int t = 0; t < 2; ++t) {
    std::vector<double> u = testing::random_values(8, rng);
    std::vector<double> v = testing::random_values(5, rng);
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t j = 0; j < 5; ++j) a(i, j) += u[i] * v[j];
  }
  const SvdResult f = svd(a);
  CHECK(max_orthonormality_defect(f.u) <= 1e-9);
  CHECK(max_orthonormality_defect(f.v) <= 1e-9);
  CHECK(reconstruction_error(a, f) <= 1e-8 * std::max(1.0, frobenius_norm(a)));
  CHECK(f.sigma[2] <= 1e-10);

  const SvdResult z = svd(Matrix(4, 6));
  for (double s : z.sigma) CHECK(s == 0.0);
  CHECK(max_orthonormality_defect(z.u) <= 1e-12);
  CHECK(max_orthonormality_defect(z.v) <= 1e-12);
}

TEST_CASE("svd deterministic across calls") {
  Rng rng(3);
  const Matrix a = random_matrix(20, 9, rng);
  const SvdResult f1 = svd(a);
  const SvdResult f2 = svd(a);
  CHECK(f1.u.data == f2.u.data);
  CHECK(f1.sigma == f2.sigma);
  CHECK(f1.v.data == f2.v.data);
}

TEST_CASE("svd rejects bad input") {
  Matrix a(2, 2);
  a(0, 0) = std::nan("");
  CHECK_THROWS_AS(svd(a), InvalidInputError);
  CHECK_THROWS_AS(svd(Matrix()), InvalidInputError);
}

TEST_CASE("det3 basics") {
  CHECK(det3(Matrix::identity(3)) == 1.0);
  Matrix mirror = Matrix::identity(3);
  mirror(2, 2) = -1.0;
  CHECK(det3(mirror) == -1.0);
}

TEST_CASE("det3 cross-checked against svd") {
  Rng rng(11);
  for (int t = 0; t < 20; ++t) {
    const Matrix m = random_matrix(3, 3, rng);
    const SvdResult f = svd(m);
    const double product = f.sigma[0] * f.sigma[1] * f.sigma[2];
    const double sign = det3(f.u) * det3(f.v);
    CHECK(det3(m) == doctest::Approx(sign * product).epsilon(1e-10));
  }
}

TEST_CASE("kabsch identity alignment") {
  Rng rng(5);
  Matrix p = random_matrix(10, 3, rng);
  const KabschResult r = kabsch_umeyama(p, p);
  CHECK_FALSE(r.degenerate);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(r.rotation(i, j) == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-9));
}

TEST_CASE("kabsch recovers a known rotation") {
  Rng rng(17);
  for (int t = 0; t < 10; ++t) {
    Matrix p = random_matrix(12, 3, rng);
    // center P
    for (std::size_t j = 0; j < 3; ++j) {
      double mean = 0.0;
      for (std::size_t i = 0; i < 12; ++i) mean += p(i, j);
      mean /= 12.0;
      for (std::size_t i = 0; i < 12; ++i) p(i, j) -= mean;
    }
    const Rotation3 r0 = random_rotation(rng);
    Matrix q(12, 3);
    for (std::size_t i = 0; i < 12; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < 3; ++k) acc += p(i, k) * r0(k, j);
        q(i, j) = acc;
      }
    const KabschResult r = kabsch_umeyama(p, q);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j)
        CHECK(r.rotation(i, j) == doctest::Approx(r0(i, j)).epsilon(1e-9));
  }
}

TEST_CASE("kabsch beats brute-force rotation sampling") {
  Rng rng(23);
  for (int t = 0; t < 3; ++t) {
    const Matrix p = random_matrix(10, 3, rng);
    const Matrix q = random_matrix(10, 3, rng);
    const KabschResult r = kabsch_umeyama(p, q);
    CHECK(r.rotation.orthogonality_defect() <= 1e-9);
    const double best = alignment_objective(p, q, r.rotation);
    for (int s = 0; s < 20000; ++s) {
      const Rotation3 candidate = random_rotation(rng);
      CHECK(best <= alignment_objective(p, q, candidate) + 1e-6);
    }
  }
}

TEST_CASE("kabsch always returns a proper rotation") {
  Rng rng(31);
  for (int t = 0; t < 50; ++t) {
    const Matrix p = random_matrix(6, 3, rng);
    Matrix q = random_matrix(6, 3, rng);
    const KabschResult r = kabsch_umeyama(p, q);
    CHECK(r.rotation.orthogonality_defect() <= 1e-9);
  }
}

TEST_CASE("kabsch flags degenerate geometry") {
  // Collinear points: cross-covariance has rank 1.
  Matrix p(4, 3), q(4, 3);
  for (std::size_t i = 0; i < 4; ++i) {
    p(i, 0) = static_cast<double>(i) - 1.5;
    q(i, 0) = static_cast<double>(i) - 1.5;
  }
  const KabschResult r = kabsch_umeyama(p, q);
  CHECK(r.degenerate);
  CHECK(r.rotation.orthogonality_defect() <= 1e-9);

  Matrix two(2, 3);
  CHECK_THROWS_AS(kabsch_umeyama(two, two), InvalidInputError);
}
