// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

/// \file
/// Proposal network: per-voxel point encoder, a stack of 3D convolutions
/// that collapses the vertical axis, three 2D blocks whose outputs are
/// upsampled to a common resolution and concatenated, and two 1x1 heads.
///
/// Internal layouts: 3D maps are (C, Y, X, Z) and 2D maps (C, Y, X), so the
/// BEV map has rows along y and columns along x. Head outputs are returned
/// as (H_f, W_f, A) and (H_f, W_f, 7A) to match the anchor flat order.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "fastpoint/nn/ops.hpp"
#include "fastpoint/nn/parameters.hpp"
#include "fastpoint/voxel_grid.hpp"

namespace fastpoint::nn {

/// Kernel, stride and padding are given in world axis order (x, y, z).
struct Conv3dLayer {
  std::array<std::size_t, 3> kernel{3, 3, 3};
  std::size_t channels = 64;
  std::array<std::size_t, 3> stride{1, 1, 1};
  std::array<std::size_t, 3> padding{1, 1, 1};
};

/// Square kernel and stride, symmetric padding.
struct Conv2dLayer {
  std::size_t kernel = 3;
  std::size_t channels = 128;
  std::size_t stride = 1;
  std::size_t padding = 1;
};

struct DeconvBranch {
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t channels = 128;
};

struct NetConfig {
  std::size_t point_features = 4;
  std::size_t encoder_channels = 8;
  std::vector<Conv3dLayer> conv3d;
  std::vector<std::vector<Conv2dLayer>> blocks;
  /// One branch per block, applied to the block's last output.
  std::vector<DeconvBranch> deconvs;
  std::size_t anchors_per_cell = 4;
  bool batchnorm = true;
  double bn_momentum = 0.1;
  /// Prior probability used to initialize the classification bias.
  double cls_prior = 0.01;

  /// The reference layer table at full width.
  static NetConfig reference();
  /// Scales every conv/deconv width by `mult` (rounded, at least 1).
  NetConfig scaled(double mult) const;

  /// Throws ConfigMismatch unless the topology is 6 conv3d layers, 3 blocks
  /// and 3 deconv branches with positive sizes.
  void validate() const;
};

/// Shapes at every stage for a given grid. All 3D shapes are (C, Y, X, Z).
struct ShapePlan {
  Shape encoder;
  std::vector<Shape> conv3d;
  Shape folded;
  std::vector<std::vector<Shape>> blocks;
  std::vector<Shape> deconvs;
  Shape fused;
  Shape cls_map;  ///< (H_f, W_f, A)
  Shape reg_map;  ///< (H_f, W_f, 7A)

  std::size_t map_rows() const { return cls_map.at(0); }
  std::size_t map_cols() const { return cls_map.at(1); }
  std::size_t fused_channels() const { return fused.at(0); }
};

/// Static shape propagation. `grid_dims` is (n_x, n_y, n_z). Throws
/// ConfigMismatch when a layer does not fit or the branches disagree.
ShapePlan infer_shapes(const NetConfig& cfg, const std::array<std::size_t, 3>& grid_dims);

struct RpnOutput {
  Tensor cls;     ///< (H_f, W_f, A), probabilities
  Tensor reg;     ///< (H_f, W_f, 7A)
  Tensor fused;   ///< (C_F, H_f, W_f)
};

class VoxelRpn {
 public:
  VoxelRpn(NetConfig cfg, std::array<std::size_t, 3> grid_dims, std::uint64_t seed);

  /// Throws ConfigMismatch when the grid dims are not the ones the network
  /// was built for.
  RpnOutput forward(const VoxelGrid& grid, NormMode mode);

  Parameters& params() { return params_; }
  const Parameters& params() const { return params_; }
  const NetConfig& config() const { return cfg_; }
  const ShapePlan& plan() const { return plan_; }

  /// Sets every value (weights, biases, norm affine and running stats) to v.
  void fill(double v);

 private:
  Tensor norm_relu(const std::string& prefix, const Tensor& x, NormMode mode);

  NetConfig cfg_;
  std::array<std::size_t, 3> dims_;
  ShapePlan plan_;
  Parameters params_;
};

}  // namespace fastpoint::nn
