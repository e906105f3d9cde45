// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastpoint/anchors.hpp"

#include <algorithm>
#include <cmath>

#include "fastpoint/error.hpp"

namespace fastpoint {

void AnchorSpec::validate() const {
  if (sizes.empty() || angles.empty()) throw ConfigMismatch("anchor sizes and angles must be non-empty");
  for (const auto& s : sizes) {
    if (!(s.l > 0.0 && s.w > 0.0 && s.h > 0.0)) throw ConfigMismatch("anchor dims must be positive");
  }
  for (std::size_t i = 0; i < angles.size(); ++i) {
    for (std::size_t j = i + 1; j < angles.size(); ++j) {
      if (std::abs(wrap_half_pi(angles[i] - angles[j])) < 1e-9) {
        throw ConfigMismatch("anchor angles coincide modulo pi");
      }
    }
  }
}

double anchor_diagonal(double l, double w) { return std::sqrt(l * l + w * w); }

AnchorSet build_anchor_grid(std::size_t rows, std::size_t cols, const AnchorSpec& spec,
                            const VoxelSpec& world) {
  spec.validate();
  if (rows == 0 || cols == 0) throw ConfigMismatch("anchor map must be non-empty");
  AnchorSet set;
  set.rows = rows;
  set.cols = cols;
  set.per_cell = spec.per_cell();
  set.boxes.reserve(rows * cols * set.per_cell);
  set.diagonals.reserve(rows * cols * set.per_cell);
  const double cell_x = world.range.x.extent() / static_cast<double>(cols);
  const double cell_y = world.range.y.extent() / static_cast<double>(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const double y = world.range.y.min + (static_cast<double>(i) + 0.5) * cell_y;
    for (std::size_t j = 0; j < cols; ++j) {
      const double x = world.range.x.min + (static_cast<double>(j) + 0.5) * cell_x;
      for (const auto& s : spec.sizes) {
        for (double angle : spec.angles) {
          set.boxes.push_back({x, y, spec.z_center, s.l, s.w, s.h, normalize_angle(angle)});
          set.diagonals.push_back(anchor_diagonal(s.l, s.w));
        }
      }
    }
  }
  return set;
}

RpnDelta encode_rpn(const Box3D& gt, const Box3D& a, double d_a) {
  return {(gt.x - a.x) / d_a,      (gt.y - a.y) / d_a,      (gt.z - a.z) / a.h,
          std::log(gt.h / a.h),   std::log(gt.w / a.w),   std::log(gt.l / a.l),
          wrap_half_pi(gt.theta - a.theta)};
}

Box3D decode_rpn(const RpnDelta& d, const Box3D& a, double d_a) {
  Box3D b;
  b.x = a.x + d[0] * d_a;
  b.y = a.y + d[1] * d_a;
  b.z = a.z + d[2] * a.h;
  b.h = a.h * std::exp(d[3]);
  b.w = a.w * std::exp(d[4]);
  b.l = a.l * std::exp(d[5]);
  b.theta = normalize_angle(a.theta + d[6]);
  return b;
}

std::size_t TargetAssignment::num_negative() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), AnchorLabel::kNegative));
}

std::vector<std::size_t> TargetAssignment::negative_anchors() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == AnchorLabel::kNegative) out.push_back(i);
  }
  return out;
}

TargetAssignment assign_targets(const AnchorSet& anchors, std::span<const Box3D> gts,
                                double pos_iou, double neg_iou) {
  if (!(pos_iou > neg_iou)) throw ConfigMismatch("pos_iou must exceed neg_iou");
  const std::size_t n = anchors.size();
  TargetAssignment out;
  out.labels.assign(n, AnchorLabel::kNegative);
  out.max_iou.assign(n, 0.0);
  if (gts.empty()) return out;

  std::vector<BoxBEV> gt_bev;
  for (const Box3D& g : gts) gt_bev.push_back(to_bev(g));
  std::vector<long> matched(n, -1);
  std::vector<double> gt_best(gts.size(), 0.0);
  std::vector<long> gt_best_anchor(gts.size(), -1);
  std::vector<double> ious(gts.size());
  for (std::size_t i = 0; i < n; ++i) {
    const BoxBEV a = to_bev(anchors.boxes[i]);
    double best = 0.0;
    long best_g = -1;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const double iou = iou_bev(a, gt_bev[g]);
      ious[g] = iou;
      if (iou > best) {
        best = iou;
        best_g = static_cast<long>(g);
      }
      if (iou > gt_best[g]) {
        gt_best[g] = iou;
        gt_best_anchor[g] = static_cast<long>(i);
      }
    }
    out.max_iou[i] = best;
    if (best >= pos_iou) {
      out.labels[i] = AnchorLabel::kPositive;
      matched[i] = best_g;
    } else if (best >= neg_iou) {
      out.labels[i] = AnchorLabel::kIgnore;
    }
  }

  std::vector<bool> has_positive(gts.size(), false);
  for (std::size_t i = 0; i < n; ++i) {
    if (matched[i] >= 0) has_positive[static_cast<std::size_t>(matched[i])] = true;
  }
  for (std::size_t g = 0; g < gts.size(); ++g) {
    if (has_positive[g]) continue;
    // Best anchor that is not already positive.
    const long overall = gt_best_anchor[g];
    long pick = -1;
    if (overall >= 0 && out.labels[static_cast<std::size_t>(overall)] != AnchorLabel::kPositive) {
      pick = overall;
    } else if (overall >= 0) {
      double best = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (out.labels[i] == AnchorLabel::kPositive) continue;
        const double iou = iou_bev(to_bev(anchors.boxes[i]), gt_bev[g]);
        if (iou > best) {
          best = iou;
          pick = static_cast<long>(i);
        }
      }
    }
    if (pick < 0) continue;
    out.labels[static_cast<std::size_t>(pick)] = AnchorLabel::kPositive;
    matched[static_cast<std::size_t>(pick)] = static_cast<long>(g);
    has_positive[g] = true;
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (out.labels[i] != AnchorLabel::kPositive) continue;
    const auto g = static_cast<std::size_t>(matched[i]);
    out.positive_anchors.push_back(i);
    out.positive_gt.push_back(g);
    out.positive_targets.push_back(encode_rpn(gts[g], anchors.boxes[i], anchors.diagonals[i]));
  }
  return out;
}

CornerTarget encode_corners(const Box3D& gt, const Box3D& proposal) {
  Box3D local = canonize(proposal, gt);
  local.theta = wrap_half_pi(local.theta);
  const CornerSet corners = box_corners(local);
  CornerTarget t{};
  for (std::size_t i = 0; i < 8; ++i) {
    t[3 * i + 0] = corners[i].x;
    t[3 * i + 1] = corners[i].y;
    t[3 * i + 2] = corners[i].z;
  }
  return t;
}

CornerSet decode_corners(const CornerTarget& t, const Box3D& proposal) {
  CornerSet out;
  for (std::size_t i = 0; i < 8; ++i) {
    out[i] = uncanonize(proposal, Vec3{t[3 * i], t[3 * i + 1], t[3 * i + 2]});
  }
  return out;
}

}  // namespace fastpoint
