#include "lift3d/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "lift3d/errors.hpp"

namespace lift3d {

using nlohmann::json;

namespace {

json manifest_to_json(const DatasetManifest& m) {
  json j;
  j["k"] = m.keypoints;
  j["camera"] = m.camera.kind == CameraKind::kOrthographic ? "orthographic" : "perspective";
  if (m.camera.kind == CameraKind::kPerspective) j["projection"] = m.camera.projection;
  j["count"] = m.sample_count;
  if (!m.split.empty()) j["split"] = m.split;
  if (!m.notes.empty()) j["notes"] = m.notes;
  if (m.normalization) {
    j["normalization"] = {{"offset", m.normalization->offset},
                          {"scale", m.normalization->scale}};
  }
  return j;
}

DatasetManifest manifest_from_json(const json& j) {
  DatasetManifest m;
  m.keypoints = j.at("k").get<std::size_t>();
  const std::string kind = j.at("camera").get<std::string>();
  if (kind == "orthographic") {
    m.camera = CameraModel::orthographic();
  } else if (kind == "perspective") {
    if (!j.contains("projection"))
      throw InvalidInputError("manifest: perspective camera needs a projection matrix");
    m.camera = CameraModel::from_projection(j.at("projection").get<std::array<double, 16>>());
  } else {
    throw InvalidInputError("manifest: unknown camera kind '" + kind + "'");
  }
  m.sample_count = j.value("count", std::size_t{0});
  m.split = j.value("split", std::string{});
  m.notes = j.value("notes", std::string{});
  if (j.contains("normalization")) {
    Normalization n;
    n.offset = j.at("normalization").at("offset").get<std::array<double, 2>>();
    n.scale = j.at("normalization").at("scale").get<double>();
    m.normalization = n;
  }
  return m;
}

void validate_sample(const Sample& s, std::size_t keypoints, std::size_t index) {
  const std::string where = "sample " + std::to_string(index);
  if (s.w.size() != keypoints || s.v.size() != keypoints)
    throw InvalidInputError(where + ": keypoint count does not match manifest");
  if (s.gt && s.gt->size() != keypoints)
    throw InvalidInputError(where + ": ground-truth count does not match manifest");
  for (std::size_t i = 0; i < keypoints; ++i) {
    if (s.v[i] != 0 && s.v[i] != 1)
      throw InvalidInputError(where + ": visibility must be binary");
    if (!std::isfinite(s.w[i][0]) || !std::isfinite(s.w[i][1]))
      throw InvalidInputError(where + ": non-finite observation");
    if (s.v[i] == 0 && (s.w[i][0] != 0.0 || s.w[i][1] != 0.0))
      throw InvalidInputError(where + ": occluded keypoints must have zeroed coordinates");
    if (s.gt)
      for (double c : (*s.gt)[i])
        if (!std::isfinite(c)) throw InvalidInputError(where + ": non-finite ground truth");
  }
}

}  // namespace

void validate(const Dataset& dataset) {
  for (std::size_t i = 0; i < dataset.samples.size(); ++i)
    validate_sample(dataset.samples[i], dataset.manifest.keypoints, i);
}

Dataset read_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset file: " + path);

  Dataset ds;
  std::string line;
  std::size_t line_number = 0;
  if (!std::getline(in, line)) throw InvalidInputError(path + ": missing manifest line");
  ++line_number;
  try {
    ds.manifest = manifest_from_json(json::parse(line));
  } catch (const json::exception& e) {
    throw InvalidInputError(path + ":1: manifest parse error: " + e.what());
  }

  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    Sample s;
    try {
      const json j = json::parse(line);
      s.w = j.at("w").get<std::vector<std::array<double, 2>>>();
      for (double v : j.at("v").get<std::vector<double>>()) {
        if (v != 0.0 && v != 1.0)
          throw InvalidInputError("visibility must be binary");
        s.v.push_back(static_cast<std::uint8_t>(v));
      }
      if (j.contains("gt")) s.gt = j.at("gt").get<std::vector<std::array<double, 3>>>();
    } catch (const json::exception& e) {
      throw InvalidInputError(path + ":" + std::to_string(line_number) +
                              ": sample parse error: " + e.what());
    }
    validate_sample(s, ds.manifest.keypoints, ds.samples.size());
    ds.samples.push_back(std::move(s));
  }
  if (ds.manifest.sample_count != 0 && ds.manifest.sample_count != ds.samples.size())
    throw InvalidInputError(path + ": manifest count " +
                            std::to_string(ds.manifest.sample_count) + " but found " +
                            std::to_string(ds.samples.size()) + " samples");
  ds.manifest.sample_count = ds.samples.size();
  return ds;
}

void write_dataset(const std::string& path, const Dataset& dataset) {
  validate(dataset);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write dataset file: " + path);

  DatasetManifest manifest = dataset.manifest;
  manifest.sample_count = dataset.samples.size();
  out << manifest_to_json(manifest).dump() << "\n";
  for (const Sample& s : dataset.samples) {
    json j;
    j["w"] = s.w;
    json v = json::array();
    for (std::uint8_t b : s.v) v.push_back(static_cast<int>(b));
    j["v"] = std::move(v);
    if (s.gt) j["gt"] = *s.gt;
    out << j.dump() << "\n";
  }
  if (!out) throw IoError("failed while writing dataset file: " + path);
}

double occlusion_rate(const Dataset& dataset) {
  std::size_t total = 0, occluded = 0;
  for (const Sample& s : dataset.samples) {
    total += s.v.size();
    for (std::uint8_t v : s.v) occluded += v == 0 ? 1 : 0;
  }
  return total == 0 ? 0.0 : static_cast<double>(occluded) / static_cast<double>(total);
}

Sample augment_inplane_rotation(const Sample& sample, double angle_radians,
                                const CameraModel& camera) {
  if (camera.kind != CameraKind::kOrthographic)
    throw InvalidInputError("augment_inplane_rotation: unsupported for perspective cameras");
  const double c = std::cos(angle_radians);
  const double s = std::sin(angle_radians);
  Sample out = sample;
  for (std::size_t i = 0; i < out.w.size(); ++i) {
    if (out.v[i] == 1) {
      const double x = out.w[i][0], y = out.w[i][1];
      out.w[i] = {c * x - s * y, s * x + c * y};
    }
    if (out.gt) {
      auto& p = (*out.gt)[i];
      const double x = p[0], y = p[1];
      p[0] = c * x - s * y;
      p[1] = s * x + c * y;
    }
  }
  return out;
}

Dataset preprocess_sequence(const Dataset& tracked, double min_visibility,
                            std::size_t target_keypoints, bool normalize) {
  validate(tracked);
  const std::size_t keypoints = tracked.manifest.keypoints;
  const std::size_t frames = tracked.samples.size();
  if (frames == 0) throw InvalidInputError("preprocess_sequence: empty sequence");

  // Visibility fraction per track; drop tracks seen in < min_visibility.
  std::vector<std::size_t> kept;
  for (std::size_t j = 0; j < keypoints; ++j) {
    std::size_t visible = 0;
    for (const Sample& s : tracked.samples) visible += s.v[j];
    if (static_cast<double>(visible) / static_cast<double>(frames) >= min_visibility)
      kept.push_back(j);
  }
  if (kept.size() < target_keypoints)
    throw InvalidInputError("preprocess_sequence: only " + std::to_string(kept.size()) +
                            " tracks survive the visibility filter, need " +
                            std::to_string(target_keypoints));

  // Mean track positions: ground truth when available, else visible 2D.
  const bool use_gt = std::all_of(tracked.samples.begin(), tracked.samples.end(),
                                  [](const Sample& s) { return s.gt.has_value(); });
  std::vector<std::array<double, 3>> positions(kept.size(), {0, 0, 0});
  for (std::size_t t = 0; t < kept.size(); ++t) {
    const std::size_t j = kept[t];
    double count = 0.0;
    for (const Sample& s : tracked.samples) {
      if (use_gt) {
        for (std::size_t a = 0; a < 3; ++a) positions[t][a] += (*s.gt)[j][a];
        count += 1.0;
      } else if (s.v[j] == 1) {
        positions[t][0] += s.w[j][0];
        positions[t][1] += s.w[j][1];
        count += 1.0;
      }
    }
    if (count > 0.0)
      for (double& c : positions[t]) c /= count;
  }

  // Farthest point sampling, seeded at the first surviving track.
  auto dist2 = [&](std::size_t a, std::size_t b) {
    double acc = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
      const double d = positions[a][c] - positions[b][c];
      acc += d * d;
    }
    return acc;
  };
  std::vector<std::size_t> selected{0};
  std::vector<double> best(kept.size());
  for (std::size_t t = 0; t < kept.size(); ++t) best[t] = dist2(t, 0);
  while (selected.size() < target_keypoints) {
    std::size_t arg = 0;
    double far = -1.0;
    for (std::size_t t = 0; t < kept.size(); ++t) {
      if (best[t] > far) {
        far = best[t];
        arg = t;
      }
    }
    selected.push_back(arg);
    for (std::size_t t = 0; t < kept.size(); ++t) best[t] = std::min(best[t], dist2(t, arg));
  }
  std::sort(selected.begin(), selected.end());

  Dataset out;
  out.manifest = tracked.manifest;
  out.manifest.keypoints = target_keypoints;
  out.manifest.notes =
      (tracked.manifest.notes.empty() ? std::string{} : tracked.manifest.notes + "; ") +
      "preprocessed: min_visibility=" + std::to_string(min_visibility) +
      ", fps_target=" + std::to_string(target_keypoints);
  for (const Sample& s : tracked.samples) {
    Sample r;
    for (std::size_t t : selected) {
      r.w.push_back(s.w[kept[t]]);
      r.v.push_back(s.v[kept[t]]);
    }
    if (s.gt) {
      r.gt.emplace();
      for (std::size_t t : selected) r.gt->push_back((*s.gt)[kept[t]]);
    }
    out.samples.push_back(std::move(r));
  }
  out.manifest.sample_count = out.samples.size();

  if (normalize) {
    double mx = 0.0, my = 0.0, count = 0.0;
    for (const Sample& s : out.samples)
      for (std::size_t j = 0; j < s.w.size(); ++j)
        if (s.v[j] == 1) {
          mx += s.w[j][0];
          my += s.w[j][1];
          count += 1.0;
        }
    if (count > 0.0) {
      mx /= count;
      my /= count;
      double var = 0.0;
      for (const Sample& s : out.samples)
        for (std::size_t j = 0; j < s.w.size(); ++j)
          if (s.v[j] == 1) {
            const double dx = s.w[j][0] - mx, dy = s.w[j][1] - my;
            var += dx * dx + dy * dy;
          }
      double scale = std::sqrt(var / (2.0 * count));
      if (scale < 1e-12) scale = 1.0;
      for (Sample& s : out.samples)
        for (std::size_t j = 0; j < s.w.size(); ++j)
          if (s.v[j] == 1)
            s.w[j] = {(s.w[j][0] - mx) / scale, (s.w[j][1] - my) / scale};
      out.manifest.normalization = Normalization{{mx, my}, scale};
    }
  }
  return out;
}

}  // namespace lift3d
