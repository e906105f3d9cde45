// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fastpoint/anchors.hpp"
#include "fastpoint/error.hpp"

namespace fastpoint {
namespace {

VoxelSpec world() {
  VoxelSpec s;
  s.range = {{0, 16}, {-8, 8}, {-3, 1}};
  s.voxel_size = {0.25, 0.25, 0.2};
  return s;
}

TEST(AnchorGrid, LayoutAndCenters) {
  const AnchorSet a = build_anchor_grid(8, 16, AnchorSpec{}, world());
  EXPECT_EQ(a.size(), 8u * 16u * 4u);
  const Box3D& b = a.boxes[a.flat(2, 3, 1)];
  EXPECT_DOUBLE_EQ(b.x, 0.5 + 3 * 1.0);
  EXPECT_DOUBLE_EQ(b.y, -8 + 2.5 * 2.0);
  EXPECT_DOUBLE_EQ(b.z, -1.0);
  EXPECT_NEAR(b.theta, kPi / 4, 1e-15);
  EXPECT_NEAR(a.diagonals[0], std::sqrt(3.9 * 3.9 + 1.6 * 1.6), 1e-12);
}

TEST(AnchorSpec, RejectsAnglesEqualModuloPi) {
  AnchorSpec s;
  s.angles = {0.0, kPi};
  EXPECT_THROW(s.validate(), ConfigMismatch);
  s.angles.clear();
  EXPECT_THROW(s.validate(), ConfigMismatch);
}

TEST(EncodeRpn, KnownResidual) {
  const Box3D a{10, 0, -1, 3.9, 1.6, 1.56, 0};
  const double d = anchor_diagonal(a.l, a.w);
  const Box3D gt{10 + d, -0.5 * d, -1 + 1.56, 3.9 * std::exp(0.1), 1.6, 1.56 * std::exp(-0.2), 0.3};
  const RpnDelta r = encode_rpn(gt, a, d);
  EXPECT_NEAR(r[0], 1.0, 1e-12);
  EXPECT_NEAR(r[1], -0.5, 1e-12);
  EXPECT_NEAR(r[2], 1.0, 1e-12);
  EXPECT_NEAR(r[3], -0.2, 1e-12);
  EXPECT_NEAR(r[4], 0.0, 1e-12);
  EXPECT_NEAR(r[5], 0.1, 1e-12);
  EXPECT_NEAR(r[6], 0.3, 1e-12);
}

TEST(EncodeRpn, OppositeHeadingEncodesLikeTheSameHeading) {
  const Box3D a{0, 0, 0, 4, 2, 1.5, 0.2};
  Box3D gt{1, 1, 0, 4, 2, 1.5, 0.5};
  const double d = anchor_diagonal(a.l, a.w);
  const auto r1 = encode_rpn(gt, a, d);
  gt.theta = normalize_angle(gt.theta + kPi);
  const auto r2 = encode_rpn(gt, a, d);
  EXPECT_NEAR(r1[6], r2[6], 1e-12);
}

TEST(EncodeCorners, SelfEncodingDecodesToOwnCorners) {
  const Box3D p{5, 1, -0.8, 4, 1.7, 1.5, 1.1};
  const CornerSet c = decode_corners(encode_corners(p, p), p);
  const CornerSet want = box_corners(p);
  for (int k = 0; k < 8; ++k) {
    EXPECT_NEAR(c[k].x, want[k].x, 1e-12);
    EXPECT_NEAR(c[k].y, want[k].y, 1e-12);
    EXPECT_NEAR(c[k].z, want[k].z, 1e-12);
  }
}

TEST(EncodeCorners, IndependentOfProposalDims) {
  const Box3D gt{5.3, 1.2, -0.7, 4, 1.7, 1.5, 1.0};
  Box3D p{5, 1, -0.8, 4, 1.7, 1.5, 1.1};
  const auto t1 = encode_corners(gt, p);
  p.l = 2.0;
  p.h = 3.0;
  const auto t2 = encode_corners(gt, p);
  for (int k = 0; k < 24; ++k) EXPECT_NEAR(t1[k], t2[k], 1e-12);
}

// Straight transcription of the assignment rules for comparison.
std::vector<AnchorLabel> oracle_labels(const AnchorSet& a, const std::vector<Box3D>& gts, double pos, double neg,
                                       std::vector<long>& match) {
  const std::size_t n = a.size();
  std::vector<AnchorLabel> out(n, AnchorLabel::kNegative);
  match.assign(n, -1);
  std::vector<std::vector<double>> iou(n, std::vector<double>(gts.size()));
  for (std::size_t i = 0; i < n; ++i) {
    double best = 0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      iou[i][g] = iou_bev(to_bev(a.boxes[i]), to_bev(gts[g]));
      if (iou[i][g] > best) {
        best = iou[i][g];
        match[i] = static_cast<long>(g);
      }
    }
    if (best >= pos) {
      out[i] = AnchorLabel::kPositive;
    } else {
      match[i] = -1;
      if (best >= neg) out[i] = AnchorLabel::kIgnore;
    }
  }
  for (std::size_t g = 0; g < gts.size(); ++g) {
    bool covered = false;
    for (std::size_t i = 0; i < n; ++i) covered = covered || match[i] == static_cast<long>(g);
    if (covered) continue;
    long pick = -1;
    double best = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (out[i] == AnchorLabel::kPositive) continue;
      if (iou[i][g] > best) {
        best = iou[i][g];
        pick = static_cast<long>(i);
      }
    }
    if (pick >= 0) {
      out[static_cast<std::size_t>(pick)] = AnchorLabel::kPositive;
      match[static_cast<std::size_t>(pick)] = static_cast<long>(g);
    }
  }
  return out;
}

TEST(AssignTargets, AgreesWithRuleTranscriptionOnRandomScenes) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> x(1, 15), y(-7, 7), th(-kPi, kPi), dim(0.8, 1.2);
  const AnchorSet a = build_anchor_grid(8, 8, AnchorSpec{}, world());
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<Box3D> gts;
    const int n = 1 + trial % 4;
    for (int k = 0; k < n; ++k) gts.push_back({x(rng), y(rng), -1, 3.9 * dim(rng), 1.6 * dim(rng), 1.5, th(rng)});
    std::vector<long> match;
    const auto want = oracle_labels(a, gts, 0.6, 0.45, match);
    const TargetAssignment t = assign_targets(a, gts, 0.6, 0.45);
    ASSERT_EQ(t.labels, want) << "trial " << trial;
    for (std::size_t k = 0; k < t.num_positive(); ++k) {
      EXPECT_EQ(static_cast<long>(t.positive_gt[k]), match[t.positive_anchors[k]]);
      const auto& g = gts[t.positive_gt[k]];
      const auto& an = a.boxes[t.positive_anchors[k]];
      const auto back = decode_rpn(t.positive_targets[k], an, a.diagonals[t.positive_anchors[k]]);
      EXPECT_NEAR(back.x, g.x, 1e-9);
      EXPECT_NEAR(back.l, g.l, 1e-9);
    }
    EXPECT_TRUE(std::is_sorted(t.positive_anchors.begin(), t.positive_anchors.end()));
  }
}

TEST(AssignTargets, EveryReachableGtGetsAPositive) {
  const AnchorSet a = build_anchor_grid(8, 8, AnchorSpec{}, world());
  // Small box well below the positive threshold against every anchor.
  const std::vector<Box3D> gts{{5.1, 0.3, -1, 2.0, 1.0, 1.5, 0.2}};
  const TargetAssignment t = assign_targets(a, gts);
  ASSERT_EQ(t.num_positive(), 1u);
  EXPECT_LT(t.max_iou[t.positive_anchors[0]], 0.6);
}

TEST(AssignTargets, NoGtsMeansAllNegative) {
  const AnchorSet a = build_anchor_grid(2, 2, AnchorSpec{}, world());
  const TargetAssignment t = assign_targets(a, {});
  EXPECT_EQ(t.num_negative(), a.size());
  EXPECT_EQ(t.negative_anchors().size(), a.size());
  EXPECT_THROW(assign_targets(a, {}, 0.4, 0.5), ConfigMismatch);
}

}  // namespace
}  // namespace fastpoint
