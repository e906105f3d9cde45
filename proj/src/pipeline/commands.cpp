// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastpoint/pipeline/commands.hpp"

#include <cstdio>
#include <set>

#include "fastpoint/error.hpp"
#include "fastpoint/evalkit.hpp"
#include "fastpoint/kitti.hpp"
#include "fastpoint/pipeline/dataset.hpp"
#include "fastpoint/pipeline/model.hpp"
#include "fastpoint/pipeline/trainer.hpp"
#include "fastpoint/selftest.hpp"

namespace fastpoint::pipeline {

namespace fs = std::filesystem;

namespace {

void say(const CommandOptions& opt, const std::string& line) {
  if (opt.log) *opt.log << line << "\n" << std::flush;
}

// Runs fn, naming the frame when a library error escapes.
template <typename Fn>
void for_frame(const CommandOptions& opt, const std::string& id, Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    say(opt, "frame " + id + ": " + e.what());
    throw;
  }
}

std::string num(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

std::vector<Scene> scenes_of(const std::vector<Frame>& frames, const CropRange& range) {
  std::vector<Scene> out;
  out.reserve(frames.size());
  for (const Frame& f : frames) out.push_back(scene_from_frame(f, range));
  return out;
}

}  // namespace

int cmd_ingest(const CommandOptions& opt) {
  const PipelineConfig& cfg = opt.config;
  const auto frames = load_frames(cfg);
  const fs::path root = opt.out / "dataset";
  std::string summary = "frames = " + std::to_string(frames.size()) + "\n";
  std::vector<std::string> ids;
  for (const Frame& f : frames) {
    for_frame(opt, f.id, [&] {
      write_frame(root, f);
      const auto kept = kitti::crop_to_range(f.points, cfg.voxel.range);
      summary += f.id + ".points = " + std::to_string(f.points.size()) + "\n";
      summary += f.id + ".points_in_range = " + std::to_string(kept.size()) + "\n";
      summary += f.id + ".labels = " + std::to_string(f.labels.size()) + "\n";
    });
    ids.push_back(f.id);
  }
  write_split(root, cfg.split, ids);
  kitti::write_text_file(opt.out / "ingest.txt", summary);
  say(opt, "ingested " + std::to_string(frames.size()) + " frames into " + root.string());
  return 0;
}

int cmd_voxelize(const CommandOptions& opt) {
  const PipelineConfig& cfg = opt.config;
  const auto frames = load_frames(cfg);
  fs::create_directories(opt.out / "voxels");
  std::string summary;
  for (const Frame& f : frames) {
    for_frame(opt, f.id, [&] {
      const auto pts = kitti::crop_to_range(f.points, cfg.voxel.range);
      const VoxelGrid grid = voxelize(pts, cfg.voxel, frame_seed(cfg.seed, f.id));
      write_grid(opt.out / "voxels" / (f.id + ".fpvx"), grid);
      summary += f.id + ".voxels = " + std::to_string(grid.voxels.size()) + "\n";
      summary += f.id + ".stored_points = " + std::to_string(grid.total_points()) + "\n";
    });
  }
  const auto d = cfg.voxel.dims();
  summary = "grid = " + std::to_string(d[0]) + "x" + std::to_string(d[1]) + "x" + std::to_string(d[2]) + "\n" + summary;
  kitti::write_text_file(opt.out / "voxelize.txt", summary);
  say(opt, "voxelized " + std::to_string(frames.size()) + " frames");
  return 0;
}

int cmd_targets(const CommandOptions& opt) {
  const PipelineConfig& cfg = opt.config;
  const nn::ShapePlan plan = cfg.plan();
  const AnchorSet anchors = build_anchor_grid(plan.map_rows(), plan.map_cols(), cfg.anchors, cfg.voxel);
  const auto frames = load_frames(cfg);
  fs::create_directories(opt.out / "targets");
  std::string summary = "anchors = " + std::to_string(anchors.size()) + "\n";
  for (const Frame& f : frames) {
    for_frame(opt, f.id, [&] {
      const Scene s = scene_from_frame(f, cfg.voxel.range);
      const TargetAssignment ta = assign_targets(anchors, s.boxes, cfg.pos_iou, cfg.neg_iou);
      std::string text = "# anchor gt dx dy dz dh dw dl dtheta\n";
      for (std::size_t k = 0; k < ta.num_positive(); ++k) {
        text += std::to_string(ta.positive_anchors[k]) + " " + std::to_string(ta.positive_gt[k]);
        for (double v : ta.positive_targets[k]) text += " " + num("%.9g", v);
        text += "\n";
      }
      kitti::write_text_file(opt.out / "targets" / (f.id + ".txt"), text);
      const std::size_t neg = ta.num_negative();
      summary += f.id + ".positive = " + std::to_string(ta.num_positive()) + "\n";
      summary += f.id + ".negative = " + std::to_string(neg) + "\n";
      summary += f.id + ".ignored = " + std::to_string(anchors.size() - neg - ta.num_positive()) + "\n";
    });
  }
  kitti::write_text_file(opt.out / "targets.txt", summary);
  say(opt, "assigned targets for " + std::to_string(frames.size()) + " frames");
  return 0;
}

int cmd_train_toy(const CommandOptions& opt) {
  const PipelineConfig& cfg = opt.config;
  const auto scenes = scenes_of(load_frames(cfg), cfg.voxel.range);
  Model model(cfg);
  const TrainLog log = train_two_phase(model, scenes, opt.log);
  fs::create_directories(opt.out);
  nn::save_checkpoint(opt.out / "checkpoint.fpck", model.parameters());
  kitti::write_text_file(opt.out / "train_log.txt", log.to_kv());
  kitti::write_text_file(opt.out / "config.yaml", dump_config(cfg));
  say(opt, "checkpoint written to " + (opt.out / "checkpoint.fpck").string());
  return 0;
}

int cmd_infer(const CommandOptions& opt) {
  const PipelineConfig& cfg = opt.config;
  const fs::path ckpt = opt.checkpoint.value_or(opt.out / "checkpoint.fpck");
  Model model(cfg);
  model.load(nn::load_checkpoint(ckpt));
  const auto frames = load_frames(cfg);
  fs::create_directories(opt.out / "detections");
  std::string timings;
  std::size_t total = 0;
  for (const Frame& f : frames) {
    for_frame(opt, f.id, [&] {
      const FrameOutput r = model.detect(f.points, frame_seed(cfg.seed, f.id), opt.skip_refiner);
      kitti::write_text_file(opt.out / "detections" / (f.id + ".txt"), format_detections(r.detections, f.calib));
      total += r.detections.size();
      const auto& t = r.timings;
      timings += f.id + ".voxelize_ms = " + num("%.3f", t.voxelize_ms) + "\n";
      timings += f.id + ".rpn_ms = " + num("%.3f", t.rpn_ms) + "\n";
      timings += f.id + ".proposals_ms = " + num("%.3f", t.proposals_ms) + "\n";
      timings += f.id + ".refine_ms = " + num("%.3f", t.refine_ms) + "\n";
      timings += f.id + ".total_ms = " + num("%.3f", t.total_ms) + "\n";
    });
  }
  kitti::write_text_file(opt.out / "timings.txt", timings);
  say(opt, std::to_string(total) + " detections over " + std::to_string(frames.size()) + " frames");
  return 0;
}

namespace {

std::vector<eval::EvalCell> default_cells() {
  std::vector<eval::EvalCell> cells;
  for (auto metric : {eval::Metric::k3D, eval::Metric::kBev}) {
    for (double iou : {0.5, 0.7}) {
      for (auto d : {kitti::Difficulty::kEasy, kitti::Difficulty::kModerate, kitti::Difficulty::kHard}) {
        cells.push_back({metric, iou, d, {}, kitti::ObjectClass::kCar});
      }
    }
  }
  for (auto [lo, hi] : {std::pair{0.0, 30.0}, std::pair{30.0, 50.0}, std::pair{50.0, eval::RangeBucket{}.max}}) {
    cells.push_back({eval::Metric::k3D, 0.7, kitti::Difficulty::kModerate, {lo, hi}, kitti::ObjectClass::kCar});
  }
  return cells;
}

}  // namespace

int cmd_eval(const CommandOptions& opt) {
  const PipelineConfig& cfg = opt.config;
  const fs::path dir = opt.detections.value_or(opt.out / "detections");
  const auto frames = load_frames(cfg);
  eval::LabelsById gts;
  eval::DetectionsById dets;
  std::set<std::string> known;
  for (const Frame& f : frames) {
    gts[f.id] = f.labels;
    known.insert(f.id);
    const fs::path p = dir / (f.id + ".txt");
    if (fs::exists(p)) {
      for_frame(opt, f.id, [&] { dets[f.id] = parse_detections(kitti::read_text_file(p), f.calib); });
    }
  }
  if (fs::exists(dir)) {
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.path().extension() != ".txt") continue;
      const std::string id = e.path().stem().string();
      if (!known.count(id)) throw MissingFrame("detections for unknown frame '" + id + "'");
    }
  }
  const auto cells = default_cells();
  const auto results = eval::evaluate(dets, gts, cells, eval::ApMode::kR11);
  const std::string report = eval::format_report(results);
  fs::create_directories(opt.out);
  kitti::write_text_file(opt.out / "metrics.txt", eval::format_kv(results));
  kitti::write_text_file(opt.out / "report.txt", report);
  if (opt.log) *opt.log << report << std::flush;
  return 0;
}

int cmd_augment(const CommandOptions& opt) {
  const PipelineConfig& cfg = opt.config;
  const auto frames = load_frames(cfg);
  const auto scenes = scenes_of(frames, cfg.voxel.range);
  const GtDatabase db = build_gt_database(scenes);
  fs::create_directories(opt.out);
  write_gt_database(opt.out / "gt_database.fpgd", db);
  const fs::path root = opt.out / "augmented";
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    for_frame(opt, scenes[i].id, [&] {
      const Scene aug = augment_scene(scenes[i], &db, cfg.augment, frame_seed(cfg.seed, scenes[i].id));
      write_frame(root, frame_from_scene(aug, frames[i].calib));
    });
    ids.push_back(scenes[i].id);
  }
  write_split(root, cfg.split, ids);
  say(opt, "augmented " + std::to_string(scenes.size()) + " frames with " + std::to_string(db.entries.size()) +
               " database objects");
  return 0;
}

int cmd_selftest(const CommandOptions& opt) {
  const auto results = selftest::run_all();
  std::string text;
  bool ok = true;
  for (const auto& r : results) {
    text += std::string(r.pass ? "PASS " : "FAIL ") + r.name + " (" + num("%.1f", r.seconds) + " s) " + r.detail + "\n";
    ok = ok && r.pass;
  }
  fs::create_directories(opt.out);
  kitti::write_text_file(opt.out / "selftest.txt", text);
  if (opt.log) *opt.log << text << std::flush;
  return ok ? 0 : 1;
}

}  // namespace fastpoint::pipeline
