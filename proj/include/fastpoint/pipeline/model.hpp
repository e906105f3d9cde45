// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

/// \file
/// The two-stage detector: VoxelRPN proposals refined by RefinerNet.

#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "fastpoint/anchors.hpp"
#include "fastpoint/nn/parameters.hpp"
#include "fastpoint/nn/refinernet.hpp"
#include "fastpoint/nn/voxelrpn.hpp"
#include "fastpoint/pipeline/config.hpp"
#include "fastpoint/postprocess.hpp"
#include "fastpoint/refiner_features.hpp"

namespace fastpoint::pipeline {

/// Stable 64-bit hash of a frame id, used to seed per-frame sampling.
std::uint64_t frame_seed(std::uint64_t seed, std::string_view id);

/// Keeps at most `cap` points of a box feature at evenly spaced positions.
BoxFeature cap_points(const BoxFeature& f, std::size_t cap);

struct StageTimings {
  double voxelize_ms = 0.0;
  double rpn_ms = 0.0;
  double proposals_ms = 0.0;
  double refine_ms = 0.0;
  double total_ms = 0.0;
};

struct FrameOutput {
  std::vector<Detection> proposals;   ///< post-NMS top-K from the first stage
  std::vector<Detection> detections;  ///< refined proposals (or the proposals themselves)
  StageTimings timings;
};

/// First-stage products of one frame, kept for refinement.
struct RpnFrame {
  std::vector<Detection> proposals;
  FeatureMap features;
  PointCloud points;  ///< cropped to the voxel range
};

class Model {
 public:
  explicit Model(const PipelineConfig& cfg);

  const PipelineConfig& config() const { return cfg_; }
  nn::VoxelRpn& rpn() { return rpn_; }
  nn::RefinerNet& refiner() { return refiner_; }
  const AnchorSet& anchors() const { return anchors_; }

  /// Both stages' entries in one set (tensors shared, not copied).
  nn::Parameters parameters() const;
  /// Throws ConfigMismatch when an entry is missing or differs in shape.
  void load(const nn::Parameters& checkpoint);

  /// Voxelize, forward in eval mode, decode, NMS and top-K.
  RpnFrame propose(std::span<const Point> points, std::uint64_t seed, StageTimings* timings = nullptr);

  /// Box features for proposals; nullopt for a proposal with no points.
  std::optional<BoxFeature> box_feature(const RpnFrame& frame, const Detection& proposal) const;

  /// Full inference. With skip_refiner the detections are the proposals.
  FrameOutput detect(std::span<const Point> points, std::uint64_t seed, bool skip_refiner = false);

 private:
  PipelineConfig cfg_;
  nn::VoxelRpn rpn_;
  nn::RefinerNet refiner_;
  AnchorSet anchors_;
};

}  // namespace fastpoint::pipeline
