// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastpoint/pipeline/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "fastpoint/error.hpp"
#include "fastpoint/rng.hpp"

namespace fastpoint::pipeline {

namespace {

constexpr double kInset = 0.02;

struct Face {
  Vec3 center;  // box frame
  Vec3 u, v;    // half-extent edge vectors
  Vec3 normal;
};

// Surface samples on the visible sides and the roof of `box`.
void sample_shell(const Box3D& box, double density, std::mt19937_64& rng, PointCloud& out) {
  const double hl = box.l / 2 - kInset, hw = box.w / 2 - kInset, hh = box.h / 2 - kInset;
  const Face faces[] = {
      {{hl, 0, 0}, {0, hw, 0}, {0, 0, hh}, {1, 0, 0}},
      {{-hl, 0, 0}, {0, hw, 0}, {0, 0, hh}, {-1, 0, 0}},
      {{0, hw, 0}, {hl, 0, 0}, {0, 0, hh}, {0, 1, 0}},
      {{0, -hw, 0}, {hl, 0, 0}, {0, 0, hh}, {0, -1, 0}},
      {{0, 0, hh}, {hl, 0, 0}, {0, hw, 0}, {0, 0, 1}},
  };
  const Box3D frame = box;
  const Vec3 sensor = canonize(frame, Vec3{0, 0, 0});
  std::uniform_real_distribution<double> s(-1.0, 1.0);
  std::uniform_real_distribution<double> refl(0.2, 0.9);
  for (const Face& f : faces) {
    const Vec3 to_sensor{sensor.x - f.center.x, sensor.y - f.center.y, sensor.z - f.center.z};
    const bool roof = f.normal.z > 0;
    if (!roof && to_sensor.x * f.normal.x + to_sensor.y * f.normal.y <= 0) continue;
    const double area = 4.0 * std::hypot(f.u.x, f.u.y, f.u.z) * std::hypot(f.v.x, f.v.y, f.v.z);
    const auto n = static_cast<std::size_t>(std::lround(area * density));
    for (std::size_t i = 0; i < n; ++i) {
      const double a = s(rng), b = s(rng);
      const Vec3 local{f.center.x + a * f.u.x + b * f.v.x, f.center.y + a * f.u.y + b * f.v.y,
                       f.center.z + a * f.u.z + b * f.v.z};
      const Vec3 w = uncanonize(frame, local);
      out.push_back({w.x, w.y, w.z, refl(rng)});
    }
  }
}

bool collides(const Box3D& b, const std::vector<Box3D>& others, double gap) {
  Box3D grown = b;
  grown.l += 2 * gap;
  grown.w += 2 * gap;
  for (const Box3D& o : others) {
    if (iou_bev(to_bev(grown), to_bev(o)) > 0.0) return true;
  }
  return false;
}

bool inside_any(const Point& p, const std::vector<Box3D>& boxes, double margin) {
  for (const Box3D& b : boxes) {
    if (!points_in_box_indices(std::span<const Point>(&p, 1), b, margin).empty()) return true;
  }
  return false;
}

}  // namespace

Scene generate_scene(const SyntheticConfig& cfg, const CropRange& range, std::uint64_t seed, const std::string& id) {
  std::mt19937_64 rng(seed);
  Scene scene;
  scene.id = id;
  std::uniform_int_distribution<std::size_t> count(cfg.min_objects, cfg.max_objects);
  const std::size_t n = count(rng);
  const double border = 2.5;
  std::uniform_real_distribution<double> ux(range.x.min + border, range.x.max - border);
  std::uniform_real_distribution<double> uy(range.y.min + border, range.y.max - border);
  std::uniform_real_distribution<double> ut(-kPi, kPi);
  std::normal_distribution<double> nl(3.9, 0.2), nw(1.6, 0.08), nh(1.56, 0.08);
  for (std::size_t k = 0; k < n; ++k) {
    for (int attempt = 0; attempt < 100; ++attempt) {
      Box3D b;
      b.l = std::clamp(nl(rng), 3.4, 4.4);
      b.w = std::clamp(nw(rng), 1.4, 1.8);
      b.h = std::clamp(nh(rng), 1.4, 1.72);
      b.x = ux(rng);
      b.y = uy(rng);
      b.z = cfg.ground_z + b.h / 2;
      b.theta = normalize_angle(ut(rng));
      if (collides(b, scene.boxes, 0.5)) continue;
      scene.boxes.push_back(b);
      scene.classes.push_back(kitti::ObjectClass::kCar);
      break;
    }
  }
  for (const Box3D& b : scene.boxes) {
    double density = cfg.surface_density;
    for (;;) {
      PointCloud shell;
      sample_shell(b, density, rng, shell);
      if (shell.size() >= cfg.min_points) {
        scene.points.insert(scene.points.end(), shell.begin(), shell.end());
        break;
      }
      density *= 2.0;
    }
  }
  std::uniform_real_distribution<double> gx(range.x.min, range.x.max), gy(range.y.min, range.y.max);
  std::normal_distribution<double> gz(0.0, 0.02);
  std::uniform_real_distribution<double> refl(0.0, 0.3);
  for (std::size_t i = 0; i < cfg.ground_points; ++i) {
    const Point p{gx(rng), gy(rng), cfg.ground_z - 0.05 + gz(rng), refl(rng)};
    if (range.contains(p)) scene.points.push_back(p);
  }
  std::uniform_real_distribution<double> cz(cfg.ground_z, cfg.ground_z + 2.5);
  for (std::size_t i = 0; i < cfg.clutter_points; ++i) {
    const Point p{gx(rng), gy(rng), cz(rng), refl(rng)};
    if (range.contains(p) && !inside_any(p, scene.boxes, 0.3)) scene.points.push_back(p);
  }
  return scene;
}

std::vector<Scene> generate_scenes(const PipelineConfig& cfg) {
  std::vector<Scene> out;
  out.reserve(cfg.synthetic.scenes);
  for (std::size_t i = 0; i < cfg.synthetic.scenes; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "%06zu", i);
    out.push_back(generate_scene(cfg.synthetic, cfg.voxel.range, derive_seed(cfg.seed, 0x5CE9E000 + i), id));
  }
  return out;
}

std::vector<kitti::FrameLabel> labels_for_scene(const Scene& scene, const kitti::Calibration& calib) {
  std::vector<kitti::FrameLabel> labels;
  for (std::size_t i = 0; i < scene.boxes.size(); ++i) {
    kitti::FrameLabel l;
    l.cls = i < scene.classes.size() ? scene.classes[i] : kitti::ObjectClass::kCar;
    l.type_name = std::string(kitti::class_name(l.cls));
    l.box = scene.boxes[i];
    l.alpha = kitti::observation_angle(l.box, calib);
    l.bbox2d = kitti::project_box_2d(l.box, calib);
    l.difficulty = kitti::classify_difficulty(l.bbox2d[3] - l.bbox2d[1], l.occlusion, l.truncation);
    labels.push_back(l);
  }
  return labels;
}

Frame frame_from_scene(const Scene& scene, const kitti::Calibration& calib) {
  return {scene.id, scene.points, labels_for_scene(scene, calib), calib};
}

Scene scene_from_frame(const Frame& frame, const CropRange& range) {
  Scene s;
  s.id = frame.id;
  s.points = kitti::crop_to_range(frame.points, range);
  for (const auto& l : frame.labels) {
    if (l.cls == kitti::ObjectClass::kDontCare || l.cls == kitti::ObjectClass::kOther) continue;
    s.boxes.push_back(l.box);
    s.classes.push_back(l.cls);
  }
  return s;
}

void write_frame(const std::filesystem::path& root, const Frame& frame) {
  for (const char* d : {"velodyne", "label_2", "calib"}) std::filesystem::create_directories(root / d);
  kitti::write_velodyne(root / "velodyne" / (frame.id + ".bin"), frame.points);
  kitti::write_labels(root / "label_2" / (frame.id + ".txt"), frame.labels, frame.calib);
  kitti::write_text_file(root / "calib" / (frame.id + ".txt"), kitti::format_calibration(frame.calib));
}

Frame read_frame(const std::filesystem::path& root, const std::string& id) {
  const auto velo = root / "velodyne" / (id + ".bin");
  const auto label = root / "label_2" / (id + ".txt");
  const auto calib = root / "calib" / (id + ".txt");
  for (const auto& p : {velo, label, calib}) {
    if (!std::filesystem::exists(p)) throw MissingFrame("frame " + id + ": missing " + p.string());
  }
  Frame f;
  f.id = id;
  f.calib = kitti::read_calibration(calib);
  f.points = kitti::read_velodyne(velo);
  f.labels = kitti::read_labels(label, f.calib);
  return f;
}

void write_split(const std::filesystem::path& root, const std::string& split, const std::vector<std::string>& ids) {
  std::filesystem::create_directories(root / "ImageSets");
  std::string text;
  for (const auto& id : ids) text += id + "\n";
  kitti::write_text_file(root / "ImageSets" / (split + ".txt"), text);
}

std::vector<std::string> read_split(const std::filesystem::path& root, const std::string& split) {
  const auto path = root / "ImageSets" / (split + ".txt");
  if (!std::filesystem::exists(path)) throw MissingFrame("no split file " + path.string());
  return kitti::read_frame_ids(path);
}

std::vector<Frame> load_frames(const PipelineConfig& cfg) {
  std::vector<Frame> frames;
  if (cfg.dataset_root.empty()) {
    for (const Scene& s : generate_scenes(cfg)) frames.push_back(frame_from_scene(s));
    return frames;
  }
  for (const auto& id : read_split(cfg.dataset_root, cfg.split)) frames.push_back(read_frame(cfg.dataset_root, id));
  return frames;
}

}  // namespace fastpoint::pipeline
