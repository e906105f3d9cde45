// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastpoint/refiner_features.hpp"

#include <algorithm>
#include <cmath>

#include "fastpoint/error.hpp"

namespace fastpoint {

FeatureMap feature_map_from_tensor(const nn::Tensor& chw) {
  if (chw.ndim() != 3) throw ShapeMismatch("feature map must be (C, H, W), got " + nn::shape_str(chw.shape()));
  FeatureMap m;
  m.channels = chw.dim(0);
  m.rows = chw.dim(1);
  m.cols = chw.dim(2);
  m.data.resize(chw.numel());
  const auto v = chw.values();
  const std::size_t plane = m.rows * m.cols;
  for (std::size_t c = 0; c < m.channels; ++c) {
    for (std::size_t p = 0; p < plane; ++p) m.data[p * m.channels + c] = v[c * plane + p];
  }
  return m;
}

PointCloud crop_points(std::span<const Point> points, const Box3D& proposal, double margin, MarginMode mode) {
  return points_in_box(points, proposal, margin, mode);
}

namespace {

std::size_t cell_of(double coord, double min, double extent, std::size_t cells) {
  const double f = std::floor((coord - min) * static_cast<double>(cells) / extent);
  if (!(f > 0.0)) return 0;
  return std::min(static_cast<std::size_t>(f), cells - 1);
}

}  // namespace

std::array<std::size_t, 2> feature_cell(double x, double y, const FeatureMap& map, const CropRange& world) {
  return {cell_of(x, world.x.min, world.x.extent(), map.cols), cell_of(y, world.y.min, world.y.extent(), map.rows)};
}

std::span<const double> lookup_feature(double x, double y, const FeatureMap& map, const CropRange& world) {
  const auto [cx, cy] = feature_cell(x, y, map, world);
  return {map.at(cy, cx), map.channels};
}

BoxFeature build_box_feature(std::span<const Point> points, const FeatureMap& map, const CropRange& world,
                             const Box3D& proposal, double score, double margin, MarginMode mode) {
  const auto idx = points_in_box_indices(points, proposal, margin, mode);
  if (idx.empty()) throw EmptyProposal("no points within " + std::to_string(margin) + " m of the proposal");
  BoxFeature bf;
  bf.proposal = proposal;
  bf.score = score;
  bf.channels = map.channels;
  bf.coords.reserve(idx.size());
  bf.features.reserve(idx.size() * map.channels);
  for (std::size_t i : idx) {
    const Point& p = points[i];
    bf.coords.push_back(canonize(proposal, Vec3{p.x, p.y, p.z}));
    const auto f = lookup_feature(p.x, p.y, map, world);
    bf.features.insert(bf.features.end(), f.begin(), f.end());
  }
  return bf;
}

}  // namespace fastpoint
