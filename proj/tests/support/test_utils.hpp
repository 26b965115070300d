#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "lift3d/rng.hpp"
#include "lift3d/tensor.hpp"

namespace lift3d::testing {

inline std::vector<double> random_values(std::size_t n, Rng& rng, double lo = -1.0,
                                         double hi = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

// Central finite differences of a scalar function of one flat input vector.
inline std::vector<double> finite_difference(
    const std::function<double(const std::vector<double>&)>& f,
    const std::vector<double>& at, double h = 1e-4) {
  std::vector<double> grad(at.size());
  std::vector<double> x = at;
  for (std::size_t i = 0; i < at.size(); ++i) {
    x[i] = at[i] + h;
    const double fp = f(x);
    x[i] = at[i] - h;
    const double fm = f(x);
    x[i] = at[i];
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

// Relative error between gradient vectors with a unit floor, matching the
// usual gradcheck convention.
inline double gradient_error(const std::vector<double>& analytic,
                             const std::vector<double>& numeric) {
  double diff2 = 0.0, ref2 = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double d = analytic[i] - numeric[i];
    diff2 += d * d;
    ref2 += numeric[i] * numeric[i];
  }
  return std::sqrt(diff2) / std::max(1.0, std::sqrt(ref2));
}

// Runs a full gradient check for a scalar-valued tensor program. `program`
// receives a leaf tensor built from the flat values and returns the loss.
inline double check_gradient(const std::function<Tensor(const Tensor&)>& program,
                             const Shape& shape, const std::vector<double>& at,
                             double h = 1e-4) {
  Tensor x = Tensor::leaf(shape, at, true);
  Tensor loss = program(x);
  backward(loss);
  const std::vector<double> analytic = x.grad();

  auto value_fn = [&](const std::vector<double>& v) {
    Tensor p = Tensor::leaf(shape, v, false);
    return program(p).item();
  };
  const std::vector<double> numeric = finite_difference(value_fn, at, h);
  return gradient_error(analytic, numeric);
}

}  // namespace lift3d::testing
