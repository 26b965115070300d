#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "lift3d/dataset.hpp"
#include "lift3d/models.hpp"

namespace lift3d {

using Points3 = std::vector<std::array<double, 3>>;

// Mean per-joint position error: mean Euclidean distance over keypoints.
double mpjpe(const Points3& predicted, const Points3& truth);

// MPJPE after removing the one free depth constant (mean of the per-point
// z difference); mirrored depths are NOT forgiven.
double mpjpe_depth_offset(const Points3& predicted, const Points3& truth);

// Per-frame centering of both sequences, then one least-squares scale for
// the whole sequence; returns the mean MPJPE of the rescaled predictions.
double mpjpe_sequence_scale(const std::vector<Points3>& predicted,
                            const std::vector<Points3>& truth,
                            double* fitted_scale = nullptr);

// Splits the reconstruction error into the camera-plane error of occluded
// points and the depth error (after offset removal) of all points.
struct ErrorBreakdown {
  std::optional<double> in_plane_occluded;  // absent when nothing is occluded
  double depth = 0.0;
};

ErrorBreakdown error_breakdown(const Points3& predicted, const Points3& truth,
                               const std::vector<std::uint8_t>& visibility);

// Pearson correlation between predicted and ground-truth depths pooled over
// samples, each sample's depths centered first. Positive means no mirror flip.
double depth_correlation(const std::vector<Points3>& predicted,
                         const std::vector<Points3>& truth);

struct EvalOptions {
  bool use_gt_as_prediction = false;  // sanity path: evaluate the ground truth
  bool sequence_scale = false;        // also fit the sequence-level scale metric
  std::size_t chunk = 512;            // forward batch size
};

struct EvalReport {
  std::size_t samples = 0;
  std::size_t keypoints = 0;
  double mpjpe_raw = 0.0;
  double mpjpe_offset = 0.0;
  std::optional<double> mpjpe_scaled;  // sequence-scale variant
  double fitted_scale = 1.0;
  std::optional<double> in_plane_occluded;
  double depth_error = 0.0;
  double depth_corr = 0.0;
  std::vector<double> per_sample;  // depth-offset MPJPE per sample
  std::string alignment;           // "depth-offset" or "sequence-scale"
  std::string camera;
};

// Runs the model over the dataset (eval mode, no gradients), unprojects
// predictions to camera space for perspective data, and computes the metric
// family against the stored ground truth.
EvalReport evaluate_model(LiftingModel& model, const Dataset& dataset,
                          const EvalOptions& options = {});

// Key-value text serialization; per-sample errors as one comma-joined line.
void write_report(const std::string& path, const EvalReport& report);

// Batched reconstruction used by evaluation and the reconstruction export.
std::vector<Points3> reconstruct_all(LiftingModel& model, const Dataset& dataset,
                                     std::size_t chunk = 512);

}  // namespace lift3d
