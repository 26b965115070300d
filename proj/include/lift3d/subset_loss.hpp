#pragma once

#include <cstdint>
#include <vector>

#include "lift3d/matrix.hpp"
#include "lift3d/rng.hpp"
#include "lift3d/tensor.hpp"

namespace lift3d {

enum class SubsetStrategy { kRandom, kNearestNeighbor };

struct SubsetSpec {
  std::vector<std::size_t> indices;  // distinct keypoint indices
  SubsetStrategy strategy = SubsetStrategy::kRandom;
};

enum class ScaleMode { kOrthographicStd, kPerspectiveMeanDepth };

struct SubsetLossConfig {
  std::vector<std::size_t> sizes_random;       // subset sizes drawn uniformly at random
  std::vector<std::size_t> sizes_nn = {32};    // subset sizes grown from nearest neighbors
  std::size_t subsets_per_batch = 10;
  double epsilon = 1e-8;                       // floor added to squared singular values
  ScaleMode scale_mode = ScaleMode::kOrthographicStd;
};

// Uniform k-subset of {0..keypoints-1} without replacement.
SubsetSpec select_random(std::size_t keypoints, std::size_t subset_size, Rng& rng);

// Seeds a uniform random keypoint and adds its k-1 nearest neighbors, where
// distance is Euclidean between per-keypoint trajectories across the batch
// (the (K, 3B) view of the prediction); ties break toward the lower index.
// Reads values only, so gradients never flow through the selection.
SubsetSpec select_neighborhood(const Tensor& x, std::size_t subset_size, Rng& rng);

// Rigid alignment of a (B, k, 3) sub-tensor against its batchwise mean shape:
// per-sample centering, stacked (3B, k) SVD for the rank-3 mean shape
// (normalized to sample scale), mirror-flip fix from the pseudo-rotation
// determinants, per-sample Kabsch alignment, and scale normalization.
// The mean shape, rotations, flip and scale are computed on detached values;
// gradients reach the residual only through the centered coordinates.
struct AlignmentResult {
  Tensor residual;                   // (B, 3k), scaled
  Matrix mean_shape;                 // (k, 3), after any flip
  std::vector<Rotation3> rotations;  // per-sample alignment
  double scale = 1.0;
  double flip = 1.0;
  bool degenerate = false;           // any Kabsch alignment was rank-deficient
};

AlignmentResult align_and_residual(const Tensor& c, ScaleMode mode);

// 0.5 * sum_i log(sigma_i^2 + epsilon) over the min(rows, cols) singular
// values of a 2D tensor: the epsilon-floored log Gramian volume. Computed
// via a Cholesky factorization of the smaller Gram matrix, which shares its
// gradient E (E^T E + eps I)^-1 with the singular-value route.
Tensor log_gram_volume(const Tensor& e, double epsilon);

// The subset loss on one (B, k, 3) slice.
Tensor subset_loss(const Tensor& c, const SubsetLossConfig& config);

// Draws `subsets_per_batch` subsets (cycling through the configured
// strategy/size list), evaluates the subset loss on each slice of the
// (B, K, 3) prediction, and averages.
Tensor batch_subset_loss(const Tensor& x, const SubsetLossConfig& config, Rng& rng);

}  // namespace lift3d
