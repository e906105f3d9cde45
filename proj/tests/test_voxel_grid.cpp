// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "fastpoint/error.hpp"
#include "fastpoint/voxel_grid.hpp"

namespace fastpoint {
namespace {

VoxelSpec small_spec() {
  VoxelSpec s;
  s.range = {{0, 4}, {-2, 2}, {-1, 1}};
  s.voxel_size = {0.5, 0.5, 0.5};
  s.max_points_per_voxel = 3;
  return s;
}

PointCloud random_cloud(std::size_t n, const CropRange& r, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  PointCloud pts(n);
  for (auto& p : pts) {
    p = {r.x.min + u(rng) * r.x.extent(), r.y.min + u(rng) * r.y.extent(), r.z.min + u(rng) * r.z.extent(), u(rng)};
  }
  return pts;
}

TEST(VoxelSpec, ReferenceRangeGivesReferenceDims) {
  const VoxelSpec s;
  EXPECT_EQ(s.dims(), (std::array<std::size_t, 3>{704, 800, 20}));
}

TEST(VoxelSpec, RejectsFractionalTilingAndZeroCap) {
  VoxelSpec s = small_spec();
  s.voxel_size[0] = 0.3;
  EXPECT_THROW(s.validate(), ConfigMismatch);
  s = small_spec();
  s.max_points_per_voxel = 0;
  EXPECT_THROW(s.validate(), ConfigMismatch);
}

TEST(VoxelIndex, FloorsAndRejectsOutsidePoints) {
  const VoxelSpec s = small_spec();
  EXPECT_EQ(voxel_index(s, {0.0, -2.0, -1.0, 0}), (VoxelIndex{0, 0, 0}));
  EXPECT_EQ(voxel_index(s, {3.99, 1.99, 0.99, 0}), (VoxelIndex{7, 7, 3}));
  EXPECT_EQ(voxel_index(s, {1.25, 0.0, 0.1, 0}), (VoxelIndex{2, 4, 2}));
  EXPECT_THROW(voxel_index(s, {4.0, 0, 0, 0}), PointOutOfRange);
  EXPECT_THROW(voxel_index(s, {1.0, 0, -1.5, 0}), PointOutOfRange);
}

TEST(Voxelize, StoresCenterOffsetsAndCaps) {
  const VoxelSpec s = small_spec();
  PointCloud pts;
  for (int i = 0; i < 5; ++i) pts.push_back({0.1 + 0.05 * i, -1.9, -0.9, 0.1 * i});
  pts.push_back({3.2, 1.1, 0.6, 0.9});
  const VoxelGrid g = voxelize(pts, s, 1);
  ASSERT_EQ(g.voxels.size(), 2u);
  const Voxel* v = g.find({0, 0, 0});
  ASSERT_NE(v, nullptr);
  EXPECT_EQ(v->total_count, 5u);
  EXPECT_EQ(v->points.size(), 3u);
  const Voxel* w = g.find({6, 6, 3});
  ASSERT_NE(w, nullptr);
  EXPECT_NEAR(w->points[0].x, 3.2 - 3.25, 1e-12);
  EXPECT_NEAR(w->points[0].y, 1.1 - 1.25, 1e-12);
  EXPECT_NEAR(w->points[0].z, 0.6 - 0.75, 1e-12);
  EXPECT_DOUBLE_EQ(w->points[0].r, 0.9);
  EXPECT_EQ(g.total_points(), 6u);
  EXPECT_EQ(g.find({1, 1, 1}), nullptr);
}

TEST(Voxelize, SortedByFlatIndexAndDeterministic) {
  const VoxelSpec s = small_spec();
  const auto pts = random_cloud(500, s.range, 2);
  const VoxelGrid a = voxelize(pts, s, 9), b = voxelize(pts, s, 9);
  ASSERT_EQ(a.voxels.size(), b.voxels.size());
  for (std::size_t i = 0; i < a.voxels.size(); ++i) {
    EXPECT_EQ(a.voxels[i].points, b.voxels[i].points);
    if (i) {
      EXPECT_LT(a.flat(a.voxels[i - 1].index), a.flat(a.voxels[i].index));
    }
    EXPECT_LE(a.voxels[i].points.size(), s.max_points_per_voxel);
  }
}

TEST(Voxelize, CappedSubsetIsDrawnFromTheVoxel) {
  const VoxelSpec s = small_spec();
  PointCloud pts;
  for (int i = 0; i < 20; ++i) pts.push_back({0.2, 0.2 - 2.0, -0.8, 0.01 * i});
  const VoxelGrid g = voxelize(pts, s, 4);
  std::vector<double> seen;
  for (const auto& p : g.voxels[0].points) seen.push_back(p.r);
  std::sort(seen.begin(), seen.end());
  EXPECT_EQ(std::adjacent_find(seen.begin(), seen.end()), seen.end());
}

TEST(Dense, ShapeCountsAndRoundTrip) {
  const VoxelSpec s = small_spec();
  auto pts = random_cloud(200, s.range, 3);
  // Keep every slot nonzero so occupancy is recoverable from the dense form.
  for (auto& p : pts) p.r = 0.5 + 0.5 * p.r;
  const VoxelGrid g = voxelize(pts, s, 5);
  const nn::Tensor d = to_dense(g);
  EXPECT_EQ(d.shape(), (nn::Shape{8, 8, 4, 3, 4}));
  const auto counts = dense_counts(g);
  EXPECT_EQ(counts.size(), 8u * 8u * 4u);
  std::size_t stored = 0;
  for (auto c : counts) stored += c;
  std::size_t want = 0;
  for (const auto& v : g.voxels) want += v.points.size();
  EXPECT_EQ(stored, want);
  EXPECT_EQ(g.total_points(), 200u);
  const VoxelGrid back = from_dense(d, s);
  ASSERT_EQ(back.voxels.size(), g.voxels.size());
  for (std::size_t i = 0; i < g.voxels.size(); ++i) EXPECT_EQ(back.voxels[i].points, g.voxels[i].points);
}

TEST(BinaryDump, RoundTripsAndRejectsCorruption) {
  const VoxelSpec s = small_spec();
  const VoxelGrid g = voxelize(random_cloud(300, s.range, 6), s, 7);
  auto bytes = encode_grid(g);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "FPVX");
  const VoxelGrid back = decode_grid(bytes);
  EXPECT_EQ(back.dims, g.dims);
  ASSERT_EQ(back.voxels.size(), g.voxels.size());
  for (std::size_t i = 0; i < g.voxels.size(); ++i) {
    EXPECT_EQ(back.voxels[i].index, g.voxels[i].index);
    EXPECT_EQ(back.voxels[i].total_count, g.voxels[i].total_count);
    EXPECT_EQ(back.voxels[i].points, g.voxels[i].points);
  }
  bytes.resize(bytes.size() - 3);
  EXPECT_THROW(decode_grid(bytes), Error);
  bytes[0] = 'X';
  EXPECT_THROW(decode_grid(bytes), Error);
}

}  // namespace
}  // namespace fastpoint
