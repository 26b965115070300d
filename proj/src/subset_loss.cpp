#include "lift3d/subset_loss.hpp"

#include <algorithm>
#include <cmath>

#include "kernels.hpp"
#include "lift3d/errors.hpp"
#include "lift3d/linalg.hpp"

namespace lift3d {

SubsetSpec select_random(std::size_t keypoints, std::size_t subset_size, Rng& rng) {
  if (subset_size == 0 || subset_size > keypoints)
    throw InvalidInputError("select_random: subset size out of range");
  SubsetSpec spec;
  spec.strategy = SubsetStrategy::kRandom;
  spec.indices = rng.sample_without_replacement(keypoints, subset_size);
  return spec;
}

SubsetSpec select_neighborhood(const Tensor& x, std::size_t subset_size, Rng& rng) {
  if (x.ndim() != 3 || x.shape()[2] != 3)
    throw ShapeError("select_neighborhood: prediction must be (B, K, 3)");
  const std::size_t batch = x.shape()[0];
  const std::size_t keypoints = x.shape()[1];
  if (subset_size == 0 || subset_size > keypoints)
    throw InvalidInputError("select_neighborhood: subset size out of range");
  for (double v : x.values())
    if (!std::isfinite(v)) throw InvalidInputError("select_neighborhood: non-finite prediction");

  const std::size_t seed = rng.uniform_below(keypoints);

  // Squared distances between keypoint trajectories in R^{3B}.
  const double* xv = x.values().data();
  std::vector<std::pair<double, std::size_t>> by_distance;
  by_distance.reserve(keypoints - 1);
  for (std::size_t j = 0; j < keypoints; ++j) {
    if (j == seed) continue;
    double d2 = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const double* pi = xv + (b * keypoints + seed) * 3;
      const double* pj = xv + (b * keypoints + j) * 3;
      for (std::size_t a = 0; a < 3; ++a) {
        const double d = pi[a] - pj[a];
        d2 += d * d;
      }
    }
    by_distance.emplace_back(d2, j);
  }
  std::sort(by_distance.begin(), by_distance.end());

  SubsetSpec spec;
  spec.strategy = SubsetStrategy::kNearestNeighbor;
  spec.indices.push_back(seed);
  for (std::size_t t = 0; t + 1 < subset_size; ++t) spec.indices.push_back(by_distance[t].second);
  return spec;
}

AlignmentResult align_and_residual(const Tensor& c, ScaleMode mode) {
  if (c.ndim() != 3 || c.shape()[2] != 3)
    throw ShapeError("align_and_residual: expected (B, k, 3)");
  const std::size_t batch = c.shape()[0];
  const std::size_t k = c.shape()[1];
  if (batch < 2) throw InvalidInputError("align_and_residual: invalid batch, need B >= 2");
  if (k < 3) throw InvalidInputError("align_and_residual: invalid subset, need k >= 3");
  for (double v : c.values())
    if (!std::isfinite(v)) throw InvalidInputError("align_and_residual: non-finite input");

  // Per-sample centering; the only path gradients flow through.
  Tensor centered = sub(c, mean_axis(c, 1, /*keepdim=*/true));
  const std::vector<double>& cc = centered.values();

  // Stack to (3B, k): sample b contributes rows 3b..3b+2 holding its
  // transposed k x 3 coordinates.
  Matrix stacked(3 * batch, k);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t a = 0; a < 3; ++a)
        stacked(3 * b + a, j) = cc[(b * k + j) * 3 + a];

  const SvdResult f = svd(stacked);

  // Rank-3 mean shape from the top right singular vectors. The stacked
  // factorization carries a sqrt(B) mass factor relative to one sample
  // (the B pseudo-rotation blocks of U share unit norm), so the mean shape
  // is normalized back to sample scale; a rigid batch then aligns to it with
  // zero residual.
  const double inv_sqrt_b = 1.0 / std::sqrt(static_cast<double>(batch));
  AlignmentResult result;
  result.mean_shape = Matrix(k, 3);
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t a = 0; a < 3; ++a)
      result.mean_shape(j, a) = f.v(j, a) * f.sigma[a] * inv_sqrt_b;

  // Mirror-flip fix: sign of the summed pseudo-rotation determinants.
  double det_sum = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const std::array<double, 9> u_block{f.u(3 * b + 0, 0), f.u(3 * b + 0, 1), f.u(3 * b + 0, 2),
                                        f.u(3 * b + 1, 0), f.u(3 * b + 1, 1), f.u(3 * b + 1, 2),
                                        f.u(3 * b + 2, 0), f.u(3 * b + 2, 1), f.u(3 * b + 2, 2)};
    det_sum += det3(u_block);
  }
  result.flip = det_sum < 0.0 ? -1.0 : 1.0;
  if (result.flip < 0.0)
    for (double& v : result.mean_shape.data) v = -v;

  // Per-sample Kabsch alignment against the mean shape (detached values).
  result.rotations.resize(batch);
  std::vector<double> rotation_values(batch * 9);
  Matrix points(k, 3);
  for (std::size_t b = 0; b < batch; ++b) {
    std::copy_n(cc.data() + b * k * 3, k * 3, points.data.data());
    const KabschResult kr = kabsch_umeyama(points, result.mean_shape);
    result.rotations[b] = kr.rotation;
    result.degenerate = result.degenerate || kr.degenerate;
    std::copy_n(kr.rotation.m.data(), 9, rotation_values.data() + b * 9);
  }

  // Scale divisor, also from detached values.
  double scale = 0.0;
  if (mode == ScaleMode::kOrthographicStd) {
    double mean = 0.0;
    for (double v : cc) mean += v;
    mean /= static_cast<double>(cc.size());
    double var = 0.0;
    for (double v : cc) var += (v - mean) * (v - mean);
    scale = std::sqrt(var / static_cast<double>(cc.size()));
  } else {
    // Average depth of the (uncentered) slice; magnitude only, since a sign
    // change of the divisor leaves the singular values untouched.
    double mean_depth = 0.0;
    const std::vector<double>& cv = c.values();
    for (std::size_t i = 0; i < batch * k; ++i) mean_depth += cv[i * 3 + 2];
    scale = std::abs(mean_depth / static_cast<double>(batch * k));
  }
  result.scale = std::max(scale, 1e-12);

  Tensor rotations = Tensor::constant({batch, 3, 3}, std::move(rotation_values));
  Tensor mean_shape = Tensor::constant({1, k, 3}, result.mean_shape.data);
  Tensor residual = sub(matmul(centered, rotations), mean_shape);
  result.residual = reshape(mul_scalar(residual, 1.0 / result.scale), {batch, 3 * k});
  return result;
}

namespace {

// In-place Cholesky of a symmetric positive definite matrix (row-major).
// Returns false when a pivot fails, i.e. the matrix is not numerically PD.
bool cholesky(std::vector<double>& a, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double acc = a[i * n + j] - kernels::dot(a.data() + i * n, a.data() + j * n, j);
      if (i == j) {
        if (acc <= 0.0) return false;
        a[i * n + i] = std::sqrt(acc);
      } else {
        a[i * n + j] = acc / a[j * n + j];
        a[j * n + i] = 0.0;
      }
    }
  }
  return true;
}

// Solves L L^T X = B in place for row-major B with `cols` columns.
void cholesky_solve(const std::vector<double>& l, std::size_t n, double* b, std::size_t cols) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < i; ++t) {
      const double lit = l[i * n + t];
      for (std::size_t j = 0; j < cols; ++j) b[i * cols + j] -= lit * b[t * cols + j];
    }
    const double inv = 1.0 / l[i * n + i];
    for (std::size_t j = 0; j < cols; ++j) b[i * cols + j] *= inv;
  }
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t t = i + 1; t < n; ++t) {
      const double lti = l[t * n + i];
      for (std::size_t j = 0; j < cols; ++j) b[i * cols + j] -= lti * b[t * cols + j];
    }
    const double inv = 1.0 / l[i * n + i];
    for (std::size_t j = 0; j < cols; ++j) b[i * cols + j] *= inv;
  }
}

Tensor log_volume_via_singular_values(const Tensor& e, double epsilon) {
  Tensor s = singular_values(e);
  return mul_scalar(sum_all(log(add_scalar(mul(s, s), epsilon))), 0.5);
}

}  // namespace

Tensor log_gram_volume(const Tensor& e, double epsilon) {
  if (e.ndim() != 2) throw ShapeError("log_gram_volume: expected a 2D tensor");
  if (epsilon <= 0.0) throw InvalidInputError("log_gram_volume: epsilon must be positive");
  const std::size_t rows = e.shape()[0];
  const std::size_t cols = e.shape()[1];
  const std::size_t small = std::min(rows, cols);
  const bool rows_small = rows <= cols;

  // Gram matrix on the smaller side, plus the epsilon floor.
  const double* ev = e.values().data();
  auto gram = std::make_shared<std::vector<double>>(small * small, 0.0);
  {
    std::vector<double>& g = *gram;
    if (rows_small) {
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j <= i; ++j) {
          const double acc = kernels::dot(ev + i * cols, ev + j * cols, cols);
          g[i * small + j] = acc;
          g[j * small + i] = acc;
        }
    } else {
      for (std::size_t i = 0; i < rows; ++i) {
        const double* row = ev + i * cols;
        for (std::size_t a = 0; a < cols; ++a)
          for (std::size_t b = 0; b <= a; ++b) g[a * small + b] += row[a] * row[b];
      }
      for (std::size_t a = 0; a < cols; ++a)
        for (std::size_t b = a + 1; b < cols; ++b) g[a * small + b] = g[b * small + a];
    }
    for (std::size_t i = 0; i < small; ++i) g[i * small + i] += epsilon;
  }

  if (!cholesky(*gram, small)) {
    // Numerically indefinite Gram (extreme conditioning); fall back to the
    // singular-value route, which shares the same gradient formula.
    return log_volume_via_singular_values(e, epsilon);
  }

  double loss = 0.0;
  for (std::size_t i = 0; i < small; ++i) loss += std::log((*gram)[i * small + i]);

  auto en = e.node();
  auto node = detail::make_node({1}, {loss}, en->requires_grad);
  if (node->requires_grad) {
    node->parents = {en};
    detail::Node* eraw = en.get();
    node->backprop = [eraw, gram, rows, cols, small, rows_small](detail::Node& self) {
      eraw->ensure_grad();
      const double go = self.grad[0];
      const double* ev = eraw->values.data();
      if (rows_small) {
        // dE = go * G^{ -1} E
        std::vector<double> x(ev, ev + rows * cols);
        cholesky_solve(*gram, small, x.data(), cols);
        for (std::size_t i = 0; i < rows * cols; ++i) eraw->grad[i] += go * x[i];
      } else {
        // dE = go * E G^{-1}; solve on E^T and transpose back.
        std::vector<double> x(cols * rows);
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cols; ++j) x[j * rows + i] = ev[i * cols + j];
        cholesky_solve(*gram, small, x.data(), rows);
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cols; ++j) eraw->grad[i * cols + j] += go * x[j * rows + i];
      }
    };
  }
  return Tensor(std::move(node));
}

Tensor subset_loss(const Tensor& c, const SubsetLossConfig& config) {
  AlignmentResult aligned = align_and_residual(c, config.scale_mode);
  return log_gram_volume(aligned.residual, config.epsilon);
}

Tensor batch_subset_loss(const Tensor& x, const SubsetLossConfig& config, Rng& rng) {
  if (x.ndim() != 3 || x.shape()[2] != 3)
    throw ShapeError("batch_subset_loss: expected (B, K, 3)");
  if (config.subsets_per_batch < 1)
    throw InvalidInputError("batch_subset_loss: need at least one subset per batch");
  const std::size_t keypoints = x.shape()[1];

  std::vector<std::pair<SubsetStrategy, std::size_t>> menu;
  for (std::size_t size : config.sizes_random) menu.emplace_back(SubsetStrategy::kRandom, size);
  for (std::size_t size : config.sizes_nn) menu.emplace_back(SubsetStrategy::kNearestNeighbor, size);
  if (menu.empty()) throw InvalidInputError("batch_subset_loss: no subset sizes configured");
  for (const auto& [strategy, size] : menu) {
    if (size < 3 || size > keypoints)
      throw InvalidInputError("batch_subset_loss: subset sizes must be in [3, K]");
  }

  Tensor total;
  for (std::size_t j = 0; j < config.subsets_per_batch; ++j) {
    const auto& [strategy, size] = menu[j % menu.size()];
    const SubsetSpec spec = strategy == SubsetStrategy::kRandom
                                ? select_random(keypoints, size, rng)
                                : select_neighborhood(x, size, rng);
    Tensor c = gather_axis(x, 1, spec.indices);
    Tensor loss = subset_loss(c, config);
    total = total.defined() ? add(total, loss) : loss;
  }
  return mul_scalar(total, 1.0 / static_cast<double>(config.subsets_per_batch));
}

}  // namespace lift3d
