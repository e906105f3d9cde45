// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

/// \file
/// Anchor grid, target assignment and the two box parameterizations: the
/// 7-parameter anchor residual used by the proposal network and the 24-value
/// canonized corner offsets used by the refinement stage.
///
/// Anchor layout: the map is (H_f, W_f) with rows along y and columns along
/// x. Anchor (i, j, a) has flat index (i * W_f + j) * A + a, where A is the
/// number of (size, angle) pairs per cell, sizes outermost.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fastpoint/geometry.hpp"
#include "fastpoint/voxel_grid.hpp"

namespace fastpoint {

struct AnchorSize {
  double l = 3.9;
  double w = 1.6;
  double h = 1.56;
};

struct AnchorSpec {
  std::vector<AnchorSize> sizes{AnchorSize{}};
  std::vector<double> angles{0.0, kPi / 4.0, kPi / 2.0, 3.0 * kPi / 4.0};
  double z_center = -1.0;

  std::size_t per_cell() const { return sizes.size() * angles.size(); }
  /// Throws ConfigMismatch on empty lists, non-positive sizes or angles that
  /// coincide modulo pi.
  void validate() const;
};

/// Planar diagonal sqrt(l^2 + w^2) used to scale the x/y residuals.
double anchor_diagonal(double l, double w);

struct AnchorSet {
  std::size_t rows = 0;      ///< H_f (y)
  std::size_t cols = 0;      ///< W_f (x)
  std::size_t per_cell = 0;  ///< A
  std::vector<Box3D> boxes;
  std::vector<double> diagonals;

  std::size_t size() const { return boxes.size(); }
  std::size_t flat(std::size_t i, std::size_t j, std::size_t a) const {
    return (i * cols + j) * per_cell + a;
  }
};

AnchorSet build_anchor_grid(std::size_t rows, std::size_t cols, const AnchorSpec& spec,
                            const VoxelSpec& world);

/// (dx, dy, dz, dh, dw, dl, dtheta)
using RpnDelta = std::array<double, 7>;

/// Residual of gt against anchor a. The angle residual is wrapped to
/// (-pi/2, pi/2], so headings are recovered modulo pi.
RpnDelta encode_rpn(const Box3D& gt, const Box3D& a, double d_a);
Box3D decode_rpn(const RpnDelta& delta, const Box3D& a, double d_a);

enum class AnchorLabel : std::int8_t {
  kIgnore = -1,
  kNegative = 0,
  kPositive = 1,
};

struct TargetAssignment {
  std::vector<AnchorLabel> labels;
  /// Highest BEV IoU of each anchor over all gts (0 with no gts).
  std::vector<double> max_iou;
  /// Parallel arrays over positive anchors, ascending anchor index.
  std::vector<std::size_t> positive_anchors;
  std::vector<std::size_t> positive_gt;
  std::vector<RpnDelta> positive_targets;

  std::size_t num_positive() const { return positive_anchors.size(); }
  std::size_t num_negative() const;
  std::vector<std::size_t> negative_anchors() const;
};

/// Positive: BEV IoU >= pos_iou with some gt, matched to the highest-IoU gt
/// (lowest gt index on ties). Negative: max IoU < neg_iou. Otherwise ignored.
/// A gt left without any positive claims its highest-IoU anchor (IoU > 0)
/// among the anchors not already positive; gts are processed in index order.
TargetAssignment assign_targets(const AnchorSet& anchors, std::span<const Box3D> gts,
                                double pos_iou = 0.6, double neg_iou = 0.45);

/// (dx_1, dy_1, dz_1, ..., dx_8, dy_8, dz_8)
using CornerTarget = std::array<double, 24>;

/// The gt is canonized into the proposal frame, its relative yaw wrapped to
/// (-pi/2, pi/2] (a box and its pi-rotated twin share the same corners) and
/// its corners listed in canonical order as offsets from the proposal center.
CornerTarget encode_corners(const Box3D& gt, const Box3D& proposal);

/// World-frame corners from offsets in the proposal frame.
CornerSet decode_corners(const CornerTarget& t, const Box3D& proposal);

}  // namespace fastpoint
