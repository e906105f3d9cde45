// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

/// \file
/// Frame sources: seeded synthetic scenes and KITTI-layout directories
/// (velodyne/<id>.bin, label_2/<id>.txt, calib/<id>.txt, ImageSets/<split>.txt).

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fastpoint/kitti.hpp"
#include "fastpoint/pipeline/config.hpp"
#include "fastpoint/scene.hpp"

namespace fastpoint::pipeline {

/// Cars as cuboid shells (the faces visible from the origin plus the roof),
/// a ground plane and uniform clutter kept clear of the objects. Each object
/// holds at least cfg.min_points points.
Scene generate_scene(const SyntheticConfig& cfg, const CropRange& range, std::uint64_t seed,
                     const std::string& id = "000000");

/// cfg.synthetic.scenes scenes with ids 000000, 000001, ...
std::vector<Scene> generate_scenes(const PipelineConfig& cfg);

struct Frame {
  std::string id;
  PointCloud points;
  std::vector<kitti::FrameLabel> labels;
  kitti::Calibration calib;
};

/// Labels for a scene under `calib`: bbox2d from projection, alpha from the
/// observation angle, no truncation or occlusion.
std::vector<kitti::FrameLabel> labels_for_scene(const Scene& scene, const kitti::Calibration& calib);

Frame frame_from_scene(const Scene& scene, const kitti::Calibration& calib = kitti::Calibration::synthetic_rig());

/// Points cropped to `range`; DontCare and other non-evaluated labels dropped.
Scene scene_from_frame(const Frame& frame, const CropRange& range);

void write_frame(const std::filesystem::path& root, const Frame& frame);
/// Throws MissingFrame when a file of the frame is absent.
Frame read_frame(const std::filesystem::path& root, const std::string& id);

void write_split(const std::filesystem::path& root, const std::string& split, const std::vector<std::string>& ids);
std::vector<std::string> read_split(const std::filesystem::path& root, const std::string& split);

/// The configured frames: synthetic when dataset_root is empty, otherwise
/// the split read from disk.
std::vector<Frame> load_frames(const PipelineConfig& cfg);

}  // namespace fastpoint::pipeline
