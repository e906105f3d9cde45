// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

/// \file
/// Pipeline configuration and its YAML form. Every key is optional; missing
/// keys keep the defaults below. configs/reference.yaml lists them all.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "fastpoint/anchors.hpp"
#include "fastpoint/augmentation.hpp"
#include "fastpoint/losses.hpp"
#include "fastpoint/nn/refinernet.hpp"
#include "fastpoint/nn/voxelrpn.hpp"
#include "fastpoint/voxel_grid.hpp"

namespace fastpoint::pipeline {

struct Schedule {
  std::size_t epochs = 70;
  double lr = 0.01;
  /// Epochs at which the rate is multiplied by lr_decay.
  std::vector<std::size_t> lr_steps{50, 65};
  double lr_decay = 0.1;
  double weight_decay = 1e-4;
  /// The last this many epochs run normalization on its running statistics
  /// (no statistic updates), so the weights adapt to inference behavior.
  std::size_t frozen_norm_epochs = 0;

  double lr_at(std::size_t epoch) const;
};

struct SyntheticConfig {
  std::size_t scenes = 20;
  std::size_t min_objects = 1;
  std::size_t max_objects = 4;
  double ground_z = -1.73;
  /// Surface samples per square meter of visible cuboid faces.
  double surface_density = 40.0;
  std::size_t ground_points = 1500;
  std::size_t clutter_points = 300;
  /// Sampling is retried until every object holds at least this many points.
  std::size_t min_points = 30;
};

struct PostprocessConfig {
  double score_thresh = 0.3;
  double nms_iou = 0.1;
  std::size_t top_k = 30;
};

struct RefinerTrainConfig {
  /// Proposals with BEV IoU above this to some gt become refiner samples.
  double proposal_iou = 0.5;
  std::size_t max_proposals = 64;
  /// Cap on points per proposal during training and inference (0 = no cap).
  std::size_t max_points = 0;
  double margin = kContextMargin;
  MarginMode margin_mode = MarginMode::kAllFaces;
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  VoxelSpec voxel;
  AnchorSpec anchors;
  /// Width multiplier applied to the reference layer table.
  double net_width = 1.0;
  nn::NetConfig net = nn::NetConfig::reference();
  double pos_iou = 0.6;
  double neg_iou = 0.45;
  LossConfig loss;
  nn::RefinerConfig refiner;
  RefinerTrainConfig refiner_train;
  PostprocessConfig post;
  bool augment_enabled = true;
  AugmentConfig augment;
  Schedule rpn_schedule;
  Schedule refiner_schedule;
  SyntheticConfig synthetic;
  /// KITTI-layout root; empty means synthetic scenes.
  std::filesystem::path dataset_root;
  std::string split = "train";

  /// Cross-module checks: every component's own validation, the feature map
  /// tiling the anchor grid with equal x/y strides, anchors per cell agreeing
  /// with the head and the refiner input width matching the fused map.
  /// Throws ConfigMismatch.
  void validate() const;

  /// Shapes for this voxel grid.
  nn::ShapePlan plan() const;
};

/// Parses YAML, applies the width multiplier and validates.
PipelineConfig parse_config(std::string_view yaml);
PipelineConfig load_config(const std::filesystem::path& path);

/// Canonical YAML rendering of every field.
std::string dump_config(const PipelineConfig& cfg);

}  // namespace fastpoint::pipeline
