#pragma once

#include <vector>

#include "lift3d/tensor.hpp"

namespace lift3d {

// Clamped cosine similarity between the mean-centered visibility indicators
// and predicted depths of a batch: max(cos(v^c, z^c), -0.05). Larger depth
// means farther from the camera, so visibility is expected to correlate
// negatively with depth; once the cosine falls below the clamp the gradient
// is zero. Degenerate inputs (either centered vector with norm < 1e-12)
// yield a constant 0.
//
// `unclamped_cosine`, when given, receives the cosine before clamping
// (0 in the degenerate case).
Tensor occlusion_loss(const std::vector<double>& visibility, const Tensor& depths,
                      double* unclamped_cosine = nullptr);

}  // namespace lift3d
