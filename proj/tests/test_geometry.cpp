// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fastpoint/geometry.hpp"

namespace fastpoint {
namespace {

TEST(NormalizeAngle, WrapsIntoHalfOpenInterval) {
  EXPECT_DOUBLE_EQ(normalize_angle(kPi), kPi);
  EXPECT_DOUBLE_EQ(normalize_angle(-kPi), kPi);
  EXPECT_NEAR(normalize_angle(3 * kPi / 2), -kPi / 2, 1e-15);
  EXPECT_NEAR(normalize_angle(7.0), 7.0 - 2 * kPi, 1e-15);
  EXPECT_DOUBLE_EQ(wrap_half_pi(kPi / 2), kPi / 2);
  EXPECT_NEAR(wrap_half_pi(-kPi / 2), kPi / 2, 1e-15);
  EXPECT_NEAR(wrap_half_pi(kPi - 0.1), -0.1, 1e-15);
}

TEST(Corners, BevOrderIsCounterClockwiseFromFrontLeft) {
  const auto c = corners_bev({1, 2, 4, 2, 0});
  EXPECT_DOUBLE_EQ(c[0].x, 3);
  EXPECT_DOUBLE_EQ(c[0].y, 3);
  EXPECT_GT(polygon_area(c), 0);
  EXPECT_NEAR(polygon_area(c), 8.0, 1e-12);
}

TEST(Corners, TopFaceSitsAboveBottomFace) {
  const auto c = box_corners({0, 0, 1, 4, 2, 2, 0.3});
  for (int k = 0; k < 4; ++k) {
    EXPECT_DOUBLE_EQ(c[k].z, 0.0);
    EXPECT_DOUBLE_EQ(c[k + 4].z, 2.0);
    EXPECT_DOUBLE_EQ(c[k].x, c[k + 4].x);
  }
}

TEST(IouBev, AxisAlignedOverlapMatchesHandArea) {
  // 4x2 boxes offset by 1 m along x: intersection 3x2 = 6, union 10.
  EXPECT_NEAR(iou_bev({0, 0, 4, 2, 0}, {1, 0, 4, 2, 0}), 0.6, 1e-12);
  // A square and its 45 degree twin share a regular octagon.
  const double octagon = 8.0 * (std::sqrt(2.0) - 1.0);
  EXPECT_NEAR(iou_bev({0, 0, 2, 2, 0}, {0, 0, 2, 2, kPi / 4}), octagon / (8.0 - octagon), 1e-12);
}

TEST(IouBev, IdenticalDisjointAndHeadingFlip) {
  const BoxBEV a{3, -1, 4, 1.7, 0.4};
  EXPECT_NEAR(iou_bev(a, a), 1.0, 1e-12);
  BoxBEV flipped = a;
  flipped.theta = normalize_angle(a.theta + kPi);
  EXPECT_NEAR(iou_bev(a, flipped), 1.0, 1e-12);
  EXPECT_EQ(iou_bev(a, {30, 30, 4, 1.7, 0.4}), 0.0);
}

TEST(IouBev, TouchingEdgesGiveZero) { EXPECT_EQ(iou_bev({0, 0, 2, 2, 0}, {2, 0, 2, 2, 0}), 0.0); }

TEST(IouBev, SymmetricAndBoundedOnRandomPairs) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> pos(-2, 2), dim(0.5, 5), ang(-kPi, kPi);
  for (int i = 0; i < 2000; ++i) {
    const BoxBEV a{pos(rng), pos(rng), dim(rng), dim(rng), ang(rng)};
    const BoxBEV b{pos(rng), pos(rng), dim(rng), dim(rng), ang(rng)};
    const double ab = iou_bev(a, b);
    EXPECT_EQ(ab, iou_bev(b, a));
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 1.0 + 1e-12);
  }
}

TEST(Iou3d, VerticalOffsetScalesOverlap) {
  const Box3D a{0, 0, 0, 4, 2, 2, 0.7};
  Box3D b = a;
  b.z = 1.0;  // half the height overlaps: 8 / (16 + 16 - 8)
  EXPECT_NEAR(iou_3d(a, b), 8.0 / 24.0, 1e-12);
  b.z = 2.0;
  EXPECT_EQ(iou_3d(a, b), 0.0);
}

TEST(Canonize, RoundTripsPointsAndBoxes) {
  const Box3D f{5, -2, 0.5, 4, 2, 1.5, 2.1};
  const Vec3 p{1.2, 3.4, -0.7};
  const Vec3 q = uncanonize(f, canonize(f, p));
  EXPECT_NEAR(q.x, p.x, 1e-12);
  EXPECT_NEAR(q.y, p.y, 1e-12);
  EXPECT_NEAR(q.z, p.z, 1e-12);
  const Box3D self = canonize(f, f);
  EXPECT_NEAR(self.x, 0, 1e-12);
  EXPECT_NEAR(self.y, 0, 1e-12);
  EXPECT_NEAR(self.z, 0, 1e-12);
  EXPECT_NEAR(self.theta, 0, 1e-12);
  const Box3D g{6, -1, 0.2, 3.9, 1.6, 1.5, -0.4};
  const Box3D back = uncanonize(f, canonize(f, g));
  EXPECT_NEAR(back.x, g.x, 1e-12);
  EXPECT_NEAR(back.theta, g.theta, 1e-12);
}

TEST(Canonize, FrontOfBoxLandsOnPositiveX) {
  const Box3D f{0, 0, 0, 4, 2, 2, kPi / 2};
  const Vec3 c = canonize(f, Vec3{0, 1.5, 0});
  EXPECT_NEAR(c.x, 1.5, 1e-12);
  EXPECT_NEAR(c.y, 0.0, 1e-12);
}

TEST(PointsInBox, InclusiveBoundsAndMargins) {
  const Box3D b{0, 0, 0, 2, 2, 2, 0};
  const PointCloud pts{{1, 0, 0, 0}, {1.2, 0, 0, 0}, {0, 0, 1.2, 0}, {0, 0, 0, 0}};
  EXPECT_EQ(points_in_box_indices(pts, b), (std::vector<std::size_t>{0, 3}));
  EXPECT_EQ(points_in_box_indices(pts, b, 0.3), (std::vector<std::size_t>{0, 1, 2, 3}));
  const PointCloud tall{{0, 0, 50, 0}};
  EXPECT_EQ(points_in_box(tall, b, 0.1, MarginMode::kBevOnly).size(), 1u);
  EXPECT_EQ(count_points_in_box(tall, b), 0u);
}

TEST(Validity, RejectsNonPositiveDims) {
  EXPECT_TRUE(is_valid(Box3D{}));
  EXPECT_FALSE(is_valid(Box3D{0, 0, 0, 0, 1, 1, 0}));
  EXPECT_FALSE(is_valid(BoxBEV{0, 0, 1, -1, 0}));
}

}  // namespace
}  // namespace fastpoint
