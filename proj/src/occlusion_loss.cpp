#include "lift3d/occlusion_loss.hpp"

#include <cmath>

#include "lift3d/errors.hpp"

namespace lift3d {

namespace {
constexpr double kClampFloor = -0.05;
constexpr double kNormFloor = 1e-12;
}  // namespace

Tensor occlusion_loss(const std::vector<double>& visibility, const Tensor& depths,
                      double* unclamped_cosine) {
  if (depths.ndim() != 1) throw ShapeError("occlusion_loss: depths must be a vector");
  const std::size_t n = visibility.size();
  if (depths.size() != n) throw InvalidInputError("occlusion_loss: length mismatch");
  if (n < 2) throw InvalidInputError("occlusion_loss: need at least 2 entries");
  for (double v : visibility)
    if (v != 0.0 && v != 1.0) throw InvalidInputError("occlusion_loss: visibility must be binary");

  if (unclamped_cosine) *unclamped_cosine = 0.0;

  double v_mean = 0.0;
  for (double v : visibility) v_mean += v;
  v_mean /= static_cast<double>(n);
  std::vector<double> v_centered(n);
  double v_norm2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    v_centered[i] = visibility[i] - v_mean;
    v_norm2 += v_centered[i] * v_centered[i];
  }
  const double v_norm = std::sqrt(v_norm2);
  if (v_norm < kNormFloor) return Tensor::scalar(0.0);

  // Depth norm check on current values; the degenerate branch is a constant.
  double z_mean = 0.0;
  for (double z : depths.values()) z_mean += z;
  z_mean /= static_cast<double>(n);
  double z_norm2 = 0.0;
  for (double z : depths.values()) z_norm2 += (z - z_mean) * (z - z_mean);
  if (std::sqrt(z_norm2) < kNormFloor) return Tensor::scalar(0.0);

  Tensor z_centered = sub(depths, mean_axis(depths, 0, /*keepdim=*/true));
  Tensor vc = Tensor::constant({n}, v_centered);
  Tensor dot = sum_all(mul(z_centered, vc));
  Tensor z_norm = lift3d::sqrt(sum_all(mul(z_centered, z_centered)));
  Tensor cosine = div(dot, mul_scalar(z_norm, v_norm));
  if (unclamped_cosine) *unclamped_cosine = cosine.item();
  return clamp_min(cosine, kClampFloor);
}

}  // namespace lift3d
