#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "lift3d/camera.hpp"
#include "lift3d/rng.hpp"

namespace lift3d {

// One observation: K screen/NDC keypoints with visibility and optional
// camera-space ground truth. Occluded w entries are (0, 0) by contract.
struct Sample {
  std::vector<std::array<double, 2>> w;
  std::vector<std::uint8_t> v;
  std::optional<std::vector<std::array<double, 3>>> gt;
};

// 2D normalization applied to observed coordinates: w' = (w - offset) / scale.
struct Normalization {
  std::array<double, 2> offset{0.0, 0.0};
  double scale = 1.0;
};

struct DatasetManifest {
  std::size_t keypoints = 0;
  CameraModel camera;
  std::size_t sample_count = 0;
  std::string split;
  std::string notes;
  std::optional<Normalization> normalization;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<Sample> samples;
};

// Line-oriented text format: line 1 is the manifest as a JSON object, every
// following line one sample as a JSON object with fields "w", "v" and
// optionally "gt". Doubles round-trip exactly.
Dataset read_dataset(const std::string& path);
void write_dataset(const std::string& path, const Dataset& dataset);

// Checks the Sample invariants (sizes, binary v, zeroed occluded w, finite
// values); throws InvalidInputError naming the offending sample.
void validate(const Dataset& dataset);

double occlusion_rate(const Dataset& dataset);

// Articulated-chain generator: keypoints sampled once inside a thin tube
// around `segments` unit-length segments, per-frame hinge angles and a random
// global rotation, orthographic projection along z, and proximity-based
// self-occlusion (a point is occluded when another point projects within
// occlusion_radius and is closer to the camera by more than depth_margin).
struct HingeChainConfig {
  std::size_t frames = 2000;
  std::size_t keypoints = 60;
  std::size_t segments = 3;
  double max_angle_deg = 60.0;
  double tube_radius = 0.05;
  double occlusion_radius = 0.03;
  double depth_margin = 0.02;
  std::uint64_t seed = 1;
};

Dataset synth_hinge_chain(const HingeChainConfig& config);

// Rotates observed (x, y) and ground-truth (x, y) about the screen origin.
// Orthographic cameras only.
Sample augment_inplane_rotation(const Sample& sample, double angle_radians,
                                const CameraModel& camera);

// Track filtering and farthest-point downsampling for tracked sequences:
// drops tracks visible in fewer than `min_visibility` of the frames, then
// greedily selects `target_keypoints` tracks by max-min distance between
// mean track positions (seeded at the first surviving track). Optionally
// normalizes observed coordinates to zero mean / unit std, recording the
// transform in the manifest.
Dataset preprocess_sequence(const Dataset& tracked, double min_visibility = 0.30,
                            std::size_t target_keypoints = 100, bool normalize = true);

}  // namespace lift3d
