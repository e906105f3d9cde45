// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

/// \file
/// Voxelization of a cropped point cloud.
///
/// Axis order is (x, y, z): index i runs along x, j along y, k along z. A
/// 70.4 m x 80 m x 4 m range at 0.1 x 0.1 x 0.2 m gives dims (704, 800, 20);
/// as a BEV image that is 800 rows (y) by 704 columns (x).
///
/// Each stored point keeps (dx, dy, dz, r): its offset from the voxel center
/// and its reflectance.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fastpoint/nn/tensor.hpp"
#include "fastpoint/point_cloud.hpp"

namespace fastpoint {

using VoxelIndex = std::array<std::size_t, 3>;

struct VoxelSpec {
  CropRange range{{0.0, 70.4}, {-40.0, 40.0}, {-3.0, 1.0}};
  std::array<double, 3> voxel_size{0.1, 0.1, 0.2};
  std::size_t max_points_per_voxel = 6;

  /// Throws ConfigMismatch when an extent is not a whole number of voxels
  /// (within 1e-6 voxels) or the cap is zero.
  void validate() const;
  std::array<std::size_t, 3> dims() const;
};

struct Voxel {
  VoxelIndex index{};
  /// Points that fell in this voxel before capping.
  std::size_t total_count = 0;
  /// At most max_points_per_voxel entries, in input order.
  std::vector<Point> points;
};

struct VoxelGrid {
  VoxelSpec spec;
  std::array<std::size_t, 3> dims{};
  /// Occupied voxels sorted by flat index.
  std::vector<Voxel> voxels;

  std::size_t flat(const VoxelIndex& idx) const { return (idx[0] * dims[1] + idx[1]) * dims[2] + idx[2]; }
  /// nullptr when the voxel is empty.
  const Voxel* find(const VoxelIndex& idx) const;
  std::size_t total_points() const;
  std::array<double, 3> voxel_center(const VoxelIndex& idx) const;
};

/// Throws PointOutOfRange when p is outside spec.range.
VoxelIndex voxel_index(const VoxelSpec& spec, const Point& p);

/// Bins points into voxels; an overfull voxel keeps a uniform random subset of
/// exactly max_points_per_voxel points, drawn from a generator seeded by
/// (seed, voxel index).
VoxelGrid voxelize(std::span<const Point> points, const VoxelSpec& spec, std::uint64_t seed);

/// Dense (n_x, n_y, n_z, max_points_per_voxel, 4) tensor, empty slots zero.
nn::Tensor to_dense(const VoxelGrid& grid);

/// Stored point count per voxel in dense (flat) order.
std::vector<std::size_t> dense_counts(const VoxelGrid& grid);

/// Inverse of to_dense. A voxel is occupied when any slot is nonzero; its
/// stored count runs to the last nonzero slot. total_count is set to the
/// stored count.
VoxelGrid from_dense(const nn::Tensor& dense, const VoxelSpec& spec);

/// Grid dump (little-endian):
///   char[4] "FPVX", u32 version (1)
///   u32 n_x, n_y, n_z
///   f64 x_min, x_max, y_min, y_max, z_min, z_max, v_x, v_y, v_z
///   u32 max_points_per_voxel
///   u64 occupied voxel count
///   per voxel: u32 i, j, k; u32 total_count; u32 stored; stored x f64[4]
std::vector<std::uint8_t> encode_grid(const VoxelGrid& grid);
VoxelGrid decode_grid(std::span<const std::uint8_t> bytes);
void write_grid(const std::filesystem::path& path, const VoxelGrid& grid);
VoxelGrid read_grid(const std::filesystem::path& path);

}  // namespace fastpoint
