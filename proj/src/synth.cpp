#include <cmath>
#include <sstream>

#include "lift3d/dataset.hpp"
#include "lift3d/errors.hpp"
#include "lift3d/matrix.hpp"

namespace lift3d {

namespace {

Rotation3 random_rotation(Rng& rng) {
  // Uniform over SO(3) via a normalized random quaternion.
  double q[4];
  for (double& c : q) c = rng.normal();
  double norm = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
  if (norm < 1e-12) {
    q[0] = 1.0;
    norm = 1.0;
  }
  const double w = q[0] / norm, x = q[1] / norm, y = q[2] / norm, z = q[3] / norm;
  Rotation3 r;
  r.m = {1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
         2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y)};
  return r;
}

}  // namespace

Dataset synth_hinge_chain(const HingeChainConfig& config) {
  if (config.segments < 1) throw InvalidInputError("hinge chain: need at least one segment");
  if (config.keypoints < 3 * config.segments)
    throw InvalidInputError("hinge chain: need at least 3 keypoints per segment");

  Rng rng(config.seed);
  const std::size_t k = config.keypoints;
  const std::size_t segments = config.segments;

  // Local keypoint placement, sampled once: segment index, position along the
  // segment axis, and a disk offset inside the tube.
  std::vector<std::size_t> segment_of(k);
  std::vector<std::array<double, 3>> local(k);
  for (std::size_t i = 0; i < k; ++i) {
    segment_of[i] = i * segments / k;
    const double along = rng.uniform01();
    const double phi = rng.uniform(0.0, 2.0 * M_PI);
    const double radius = config.tube_radius * std::sqrt(rng.uniform01());
    local[i] = {along, radius * std::cos(phi), radius * std::sin(phi)};
  }

  const double max_angle = config.max_angle_deg * M_PI / 180.0;

  Dataset ds;
  ds.manifest.keypoints = k;
  ds.manifest.camera = CameraModel::orthographic();

  for (std::size_t frame = 0; frame < config.frames; ++frame) {
    // Hinge pose: joint j rotates segment j about alternating axes.
    std::vector<Rotation3> segment_rot(segments);
    std::vector<std::array<double, 3>> segment_origin(segments, {0, 0, 0});
    for (std::size_t s = 1; s < segments; ++s) {
      const double angle = max_angle == 0.0 ? 0.0 : rng.uniform(-max_angle, max_angle);
      const std::array<double, 3> axis =
          (s % 2 == 1) ? std::array<double, 3>{0, 1, 0} : std::array<double, 3>{0, 0, 1};
      segment_rot[s] = compose(segment_rot[s - 1], rotation_from_axis_angle(axis, angle));
      const std::array<double, 3> step = segment_rot[s - 1].apply({1, 0, 0});
      for (std::size_t a = 0; a < 3; ++a)
        segment_origin[s][a] = segment_origin[s - 1][a] + step[a];
    }

    std::vector<std::array<double, 3>> points(k);
    std::array<double, 3> centroid{0, 0, 0};
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t s = segment_of[i];
      const std::array<double, 3> p = segment_rot[s].apply(local[i]);
      for (std::size_t a = 0; a < 3; ++a) {
        points[i][a] = segment_origin[s][a] + p[a];
        centroid[a] += points[i][a];
      }
    }
    for (std::size_t a = 0; a < 3; ++a) centroid[a] /= static_cast<double>(k);

    // Center, then apply the per-frame global rotation (camera space).
    const Rotation3 global = random_rotation(rng);
    for (std::size_t i = 0; i < k; ++i) {
      const std::array<double, 3> c{points[i][0] - centroid[0], points[i][1] - centroid[1],
                                    points[i][2] - centroid[2]};
      points[i] = global.apply(c);
    }

    // Self-occlusion: j hides i when j projects within occlusion_radius of i
    // and sits closer to the camera by more than depth_margin.
    Sample sample;
    sample.v.assign(k, 1);
    if (config.occlusion_radius > 0.0) {
      const double r2 = config.occlusion_radius * config.occlusion_radius;
      for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
          if (j == i) continue;
          const double dx = points[i][0] - points[j][0];
          const double dy = points[i][1] - points[j][1];
          if (dx * dx + dy * dy < r2 && points[i][2] - points[j][2] > config.depth_margin) {
            sample.v[i] = 0;
            break;
          }
        }
      }
    }
    sample.w.resize(k);
    sample.gt.emplace(points);
    for (std::size_t i = 0; i < k; ++i)
      sample.w[i] = sample.v[i] == 1 ? std::array<double, 2>{points[i][0], points[i][1]}
                                     : std::array<double, 2>{0.0, 0.0};
    ds.samples.push_back(std::move(sample));
  }
  ds.manifest.sample_count = ds.samples.size();

  std::ostringstream notes;
  notes << "hinge-chain synthetic; seed=" << config.seed << "; frames=" << config.frames
        << "; segments=" << segments << "; max_angle_deg=" << config.max_angle_deg
        << "; tube_radius=" << config.tube_radius
        << "; occlusion_radius=" << config.occlusion_radius
        << "; depth_margin=" << config.depth_margin;
  notes << "; occlusion_rate=" << occlusion_rate(ds);
  if (config.max_angle_deg == 0.0) notes << "; rigid";
  ds.manifest.notes = notes.str();
  return ds;
}

}  // namespace lift3d
