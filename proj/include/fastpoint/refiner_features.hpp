// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

/// \file
/// Per-proposal input of the refinement stage: points cropped around a
/// proposal, canonized into its frame and paired with the fused BEV feature
/// of the cell they fall in.

#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "fastpoint/geometry.hpp"
#include "fastpoint/nn/tensor.hpp"
#include "fastpoint/point_cloud.hpp"

namespace fastpoint {

/// BEV feature map stored (row = y cell, col = x cell, channel).
struct FeatureMap {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t channels = 0;
  std::vector<double> data;

  const double* at(std::size_t row, std::size_t col) const { return data.data() + (row * cols + col) * channels; }
};

/// From a channel-first (C, H, W) tensor.
FeatureMap feature_map_from_tensor(const nn::Tensor& chw);

inline constexpr double kContextMargin = 0.3;

PointCloud crop_points(std::span<const Point> points, const Box3D& proposal,
                       double margin = kContextMargin, MarginMode mode = MarginMode::kAllFaces);

/// (x cell, y cell) = (floor((x - x_min) * cols / L), floor((y - y_min) * rows / W)),
/// clamped to the map.
std::array<std::size_t, 2> feature_cell(double x, double y, const FeatureMap& map, const CropRange& world);

std::span<const double> lookup_feature(double x, double y, const FeatureMap& map, const CropRange& world);

struct BoxFeature {
  Box3D proposal;
  double score = 0.0;
  /// Canonized coordinates in the proposal frame.
  std::vector<Vec3> coords;
  /// coords.size() x channels, row-major.
  std::vector<double> features;
  std::size_t channels = 0;

  std::size_t size() const { return coords.size(); }
};

/// Throws EmptyProposal when no point lies within the margin.
BoxFeature build_box_feature(std::span<const Point> points, const FeatureMap& map, const CropRange& world,
                             const Box3D& proposal, double score, double margin = kContextMargin,
                             MarginMode mode = MarginMode::kAllFaces);

}  // namespace fastpoint
