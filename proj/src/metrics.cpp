#include "lift3d/metrics.hpp"

#include <cmath>
#include <fstream>

#include "lift3d/errors.hpp"

namespace lift3d {

namespace {

void check_same_size(const Points3& a, const Points3& b, const char* what) {
  if (a.size() != b.size() || a.empty())
    throw InvalidInputError(std::string(what) + ": shapes differ or empty");
  for (const auto& p : a)
    for (double c : p)
      if (!std::isfinite(c)) throw InvalidInputError(std::string(what) + ": non-finite input");
  for (const auto& p : b)
    for (double c : p)
      if (!std::isfinite(c)) throw InvalidInputError(std::string(what) + ": non-finite input");
}

Points3 centered_copy(const Points3& points) {
  std::array<double, 3> mean{0, 0, 0};
  for (const auto& p : points)
    for (std::size_t a = 0; a < 3; ++a) mean[a] += p[a];
  for (double& m : mean) m /= static_cast<double>(points.size());
  Points3 out = points;
  for (auto& p : out)
    for (std::size_t a = 0; a < 3; ++a) p[a] -= mean[a];
  return out;
}

}  // namespace

double mpjpe(const Points3& predicted, const Points3& truth) {
  check_same_size(predicted, truth, "mpjpe");
  double acc = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    double d2 = 0.0;
    for (std::size_t a = 0; a < 3; ++a) {
      const double d = predicted[i][a] - truth[i][a];
      d2 += d * d;
    }
    acc += std::sqrt(d2);
  }
  return acc / static_cast<double>(predicted.size());
}

double mpjpe_depth_offset(const Points3& predicted, const Points3& truth) {
  check_same_size(predicted, truth, "mpjpe_depth_offset");
  double offset = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) offset += predicted[i][2] - truth[i][2];
  offset /= static_cast<double>(predicted.size());
  Points3 shifted = predicted;
  for (auto& p : shifted) p[2] -= offset;
  return mpjpe(shifted, truth);
}

double mpjpe_sequence_scale(const std::vector<Points3>& predicted,
                            const std::vector<Points3>& truth, double* fitted_scale) {
  if (predicted.size() != truth.size() || predicted.empty())
    throw InvalidInputError("mpjpe_sequence_scale: sequence lengths differ or empty");

  std::vector<Points3> pred_c(predicted.size()), truth_c(truth.size());
  double cross = 0.0, self = 0.0;
  for (std::size_t t = 0; t < predicted.size(); ++t) {
    check_same_size(predicted[t], truth[t], "mpjpe_sequence_scale");
    pred_c[t] = centered_copy(predicted[t]);
    truth_c[t] = centered_copy(truth[t]);
    for (std::size_t i = 0; i < pred_c[t].size(); ++i)
      for (std::size_t a = 0; a < 3; ++a) {
        cross += pred_c[t][i][a] * truth_c[t][i][a];
        self += pred_c[t][i][a] * pred_c[t][i][a];
      }
  }
  if (self < 1e-300)
    throw NumericError("mpjpe_sequence_scale: degenerate all-zero predictions");
  const double scale = cross / self;
  if (fitted_scale) *fitted_scale = scale;

  double total = 0.0;
  for (std::size_t t = 0; t < predicted.size(); ++t) {
    Points3 scaled = pred_c[t];
    for (auto& p : scaled)
      for (double& c : p) c *= scale;
    total += mpjpe(scaled, truth_c[t]);
  }
  return total / static_cast<double>(predicted.size());
}

ErrorBreakdown error_breakdown(const Points3& predicted, const Points3& truth,
                               const std::vector<std::uint8_t>& visibility) {
  check_same_size(predicted, truth, "error_breakdown");
  if (visibility.size() != predicted.size())
    throw InvalidInputError("error_breakdown: visibility size mismatch");

  double offset = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) offset += predicted[i][2] - truth[i][2];
  offset /= static_cast<double>(predicted.size());

  ErrorBreakdown out;
  double in_plane = 0.0, depth = 0.0;
  std::size_t occluded = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (visibility[i] == 0) {
      const double dx = predicted[i][0] - truth[i][0];
      const double dy = predicted[i][1] - truth[i][1];
      in_plane += std::sqrt(dx * dx + dy * dy);
      ++occluded;
    }
    depth += std::abs(predicted[i][2] - offset - truth[i][2]);
  }
  out.depth = depth / static_cast<double>(predicted.size());
  if (occluded > 0) out.in_plane_occluded = in_plane / static_cast<double>(occluded);
  return out;
}

double depth_correlation(const std::vector<Points3>& predicted,
                         const std::vector<Points3>& truth) {
  if (predicted.size() != truth.size() || predicted.empty())
    throw InvalidInputError("depth_correlation: sequence lengths differ or empty");
  std::vector<double> zp, zg;
  for (std::size_t t = 0; t < predicted.size(); ++t) {
    check_same_size(predicted[t], truth[t], "depth_correlation");
    double mp = 0.0, mg = 0.0;
    for (std::size_t i = 0; i < predicted[t].size(); ++i) {
      mp += predicted[t][i][2];
      mg += truth[t][i][2];
    }
    mp /= static_cast<double>(predicted[t].size());
    mg /= static_cast<double>(truth[t].size());
    for (std::size_t i = 0; i < predicted[t].size(); ++i) {
      zp.push_back(predicted[t][i][2] - mp);
      zg.push_back(truth[t][i][2] - mg);
    }
  }
  double dot = 0.0, np = 0.0, ng = 0.0;
  for (std::size_t i = 0; i < zp.size(); ++i) {
    dot += zp[i] * zg[i];
    np += zp[i] * zp[i];
    ng += zg[i] * zg[i];
  }
  if (np < 1e-300 || ng < 1e-300) return 0.0;
  return dot / std::sqrt(np * ng);
}

std::vector<Points3> reconstruct_all(LiftingModel& model, const Dataset& dataset,
                                     std::size_t chunk) {
  validate(dataset);
  if (dataset.manifest.keypoints != model.config().keypoints)
    throw InvalidInputError("reconstruct: dataset and model keypoint counts differ");
  if (chunk == 0) chunk = 1;

  NoGradGuard guard;
  const std::size_t k = dataset.manifest.keypoints;
  std::vector<Points3> out;
  out.reserve(dataset.samples.size());
  for (std::size_t begin = 0; begin < dataset.samples.size(); begin += chunk) {
    const std::size_t count = std::min(chunk, dataset.samples.size() - begin);
    std::vector<double> w_vals(count * k * 2);
    std::vector<double> v_vals(count * k);
    for (std::size_t b = 0; b < count; ++b) {
      const Sample& s = dataset.samples[begin + b];
      for (std::size_t j = 0; j < k; ++j) {
        w_vals[(b * k + j) * 2 + 0] = s.w[j][0];
        w_vals[(b * k + j) * 2 + 1] = s.w[j][1];
        v_vals[b * k + j] = static_cast<double>(s.v[j]);
      }
    }
    Tensor w = Tensor::constant({count, k, 2}, std::move(w_vals));
    Tensor v = Tensor::constant({count, k}, std::move(v_vals));
    Tensor lifted = inpaint(w, v, model.forward(make_input_tokens(w, v), Mode::kEval));
    const std::vector<double>& x = lifted.values();
    for (std::size_t b = 0; b < count; ++b) {
      Points3 points(k);
      for (std::size_t j = 0; j < k; ++j)
        points[j] = {x[(b * k + j) * 3 + 0], x[(b * k + j) * 3 + 1], x[(b * k + j) * 3 + 2]};
      out.push_back(std::move(points));
    }
  }
  return out;
}

EvalReport evaluate_model(LiftingModel& model, const Dataset& dataset,
                          const EvalOptions& options) {
  validate(dataset);
  for (const Sample& s : dataset.samples)
    if (!s.gt) throw InvalidInputError("evaluate: dataset has samples without ground truth");
  if (dataset.samples.empty()) throw InvalidInputError("evaluate: empty dataset");

  EvalReport report;
  report.samples = dataset.samples.size();
  report.keypoints = dataset.manifest.keypoints;
  report.camera =
      dataset.manifest.camera.kind == CameraKind::kOrthographic ? "orthographic" : "perspective";

  std::vector<Points3> predictions;
  if (options.use_gt_as_prediction) {
    for (const Sample& s : dataset.samples) predictions.push_back(*s.gt);
  } else {
    predictions = reconstruct_all(model, dataset, options.chunk);
    if (dataset.manifest.camera.kind == CameraKind::kPerspective) {
      // Metrics run in camera space; predictions live in NDC.
      for (Points3& frame : predictions)
        for (auto& p : frame) p = unproject(p, dataset.manifest.camera);
    }
  }

  std::vector<Points3> truths;
  truths.reserve(report.samples);
  for (const Sample& s : dataset.samples) truths.push_back(*s.gt);

  double raw = 0.0, offset = 0.0, depth = 0.0, in_plane = 0.0;
  std::size_t frames_with_occlusion = 0;
  for (std::size_t t = 0; t < predictions.size(); ++t) {
    raw += mpjpe(predictions[t], truths[t]);
    const double off = mpjpe_depth_offset(predictions[t], truths[t]);
    offset += off;
    report.per_sample.push_back(off);
    const ErrorBreakdown eb =
        error_breakdown(predictions[t], truths[t], dataset.samples[t].v);
    depth += eb.depth;
    if (eb.in_plane_occluded) {
      in_plane += *eb.in_plane_occluded;
      ++frames_with_occlusion;
    }
  }
  report.mpjpe_raw = raw / static_cast<double>(predictions.size());
  report.mpjpe_offset = offset / static_cast<double>(predictions.size());
  report.depth_error = depth / static_cast<double>(predictions.size());
  if (frames_with_occlusion > 0)
    report.in_plane_occluded = in_plane / static_cast<double>(frames_with_occlusion);
  report.depth_corr = depth_correlation(predictions, truths);
  report.alignment = "depth-offset";
  if (options.sequence_scale) {
    report.mpjpe_scaled = mpjpe_sequence_scale(predictions, truths, &report.fitted_scale);
    report.alignment = "sequence-scale";
  }
  return report;
}

void write_report(const std::string& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report: " + path);
  out.precision(17);
  out << "samples: " << report.samples << "\n";
  out << "keypoints: " << report.keypoints << "\n";
  out << "camera: " << report.camera << "\n";
  out << "alignment: " << report.alignment << "\n";
  out << "mpjpe: " << report.mpjpe_raw << "\n";
  out << "mpjpe_depth_offset: " << report.mpjpe_offset << "\n";
  if (report.mpjpe_scaled) {
    out << "mpjpe_sequence_scale: " << *report.mpjpe_scaled << "\n";
    out << "fitted_scale: " << report.fitted_scale << "\n";
  }
  if (report.in_plane_occluded)
    out << "in_plane_error_occluded: " << *report.in_plane_occluded << "\n";
  out << "depth_error: " << report.depth_error << "\n";
  out << "depth_correlation: " << report.depth_corr << "\n";
  out << "per_sample_mpjpe_depth_offset:";
  for (std::size_t i = 0; i < report.per_sample.size(); ++i)
    out << (i ? "," : " ") << report.per_sample[i];
  out << "\n";
  if (!out) throw IoError("failed while writing report: " + path);
}

}  // namespace lift3d
