// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "fastpoint/augmentation.hpp"
#include "fastpoint/error.hpp"

namespace fastpoint {
namespace {

Scene two_car_scene() {
  Scene s;
  s.id = "000000";
  s.boxes = {{10, 0, -1, 4, 2, 1.5, 0}, {20, 5, -1, 4, 2, 1.5, 0.5}};
  s.classes = {kitti::ObjectClass::kCar, kitti::ObjectClass::kCar};
  for (int i = 0; i < 10; ++i) {
    s.points.push_back({9.0 + 0.2 * i, 0.3, -1.2, 0.1});
    s.points.push_back({20.0, 5.0 + 0.05 * i, -0.8, 0.2});
  }
  s.points.push_back({30, -10, -1.7, 0.0});
  return s;
}

TEST(GlobalAugment, FlipScaleRotateMoveBoxesWithPoints) {
  const Scene s = two_car_scene();
  const Scene a = apply_global(s, {true, 1.0, 0.0});
  EXPECT_DOUBLE_EQ(a.boxes[1].y, -5.0);
  EXPECT_DOUBLE_EQ(a.boxes[1].theta, -0.5);
  const Scene b = apply_global(s, {false, 2.0, kPi / 2});
  EXPECT_NEAR(b.boxes[0].x, 0.0, 1e-12);
  EXPECT_NEAR(b.boxes[0].y, 20.0, 1e-12);
  EXPECT_NEAR(b.boxes[0].l, 8.0, 1e-12);
  EXPECT_NEAR(b.boxes[0].theta, kPi / 2, 1e-12);
  for (std::size_t k = 0; k < s.boxes.size(); ++k) {
    EXPECT_EQ(count_points_in_box(b.points, b.boxes[k]), count_points_in_box(s.points, s.boxes[k]));
  }
}

TEST(GlobalAugment, SamplingIsSeededAndInRange) {
  const GlobalAugmentParams p;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const GlobalSample g = sample_global(p, seed);
    EXPECT_GE(g.scale, p.scale_min);
    EXPECT_LE(g.scale, p.scale_max);
    EXPECT_LE(std::abs(g.rotation), p.rotation_max);
    const GlobalSample h = sample_global(p, seed);
    EXPECT_EQ(g.flip, h.flip);
    EXPECT_EQ(g.rotation, h.rotation);
  }
}

TEST(Perturb, CollidingMoveIsRejectedAndRetried) {
  const Scene s = two_car_scene();
  // First candidate for gt 0 lands on gt 1; the second is clear.
  const std::vector<std::vector<ObjectMove>> moves{{{10, 5, 0, 0}, {0, -2, 0, 0}}, {{0, 0, 0, 0}}};
  PerturbTrace trace;
  const Scene p = perturb_objects_with(s, moves, &trace);
  EXPECT_EQ(trace.tries[0], 2);
  EXPECT_EQ(trace.rejections, 1u);
  EXPECT_DOUBLE_EQ(p.boxes[0].y, -2.0);
  EXPECT_EQ(count_points_in_box(p.points, p.boxes[0]), count_points_in_box(s.points, s.boxes[0]));
}

TEST(Perturb, ExhaustedTriesLeaveGtInPlace) {
  const Scene s = two_car_scene();
  const std::vector<std::vector<ObjectMove>> moves{{{10, 5, 0, 0}}, {}};
  PerturbTrace trace;
  const Scene p = perturb_objects_with(s, moves, &trace);
  EXPECT_TRUE(trace.skipped[0]);
  EXPECT_EQ(p.boxes[0], s.boxes[0]);
}

TEST(Perturb, RandomMovesNeverCreateOverlaps) {
  Scene s = two_car_scene();
  s.boxes[1].x = 14.5;
  s.boxes[1].y = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Scene p = perturb_objects(s, seed);
    EXPECT_EQ(iou_bev(to_bev(p.boxes[0]), to_bev(p.boxes[1])), 0.0);
  }
}

TEST(GtDatabase, BuildFiltersAndRoundTrips) {
  const Scene s = two_car_scene();
  const GtDatabase db = build_gt_database(std::vector<Scene>{s}, 0.3, 5);
  ASSERT_EQ(db.entries.size(), 2u);
  EXPECT_EQ(db.entries[0].frame_id, "000000");
  const GtDatabase strict = build_gt_database(std::vector<Scene>{s}, 0.3, 50);
  EXPECT_TRUE(strict.entries.empty());
  const auto bytes = encode_gt_database(db);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "FPGD");
  const GtDatabase back = decode_gt_database(bytes);
  ASSERT_EQ(back.entries.size(), 2u);
  EXPECT_EQ(back.entries[1].points, db.entries[1].points);
  EXPECT_EQ(back.entries[1].box, db.entries[1].box);
  auto bad = bytes;
  bad.resize(10);
  EXPECT_THROW(decode_gt_database(bad), Error);
}

TEST(Mixup, PastesOnlyClearObjects) {
  const Scene base = two_car_scene();
  Scene donor;
  donor.id = "000001";
  donor.boxes = {{10.5, 0.5, -1, 4, 2, 1.5, 0}, {40, -8, -1, 4, 2, 1.5, 0}};
  donor.classes = {kitti::ObjectClass::kCar, kitti::ObjectClass::kCar};
  for (int i = 0; i < 8; ++i) {
    donor.points.push_back({10.5, 0.5 + 0.1 * i, -1.0, 0.3});
    donor.points.push_back({40, -8 + 0.1 * i, -1.0, 0.3});
  }
  const GtDatabase db = build_gt_database(std::vector<Scene>{donor}, 0.3, 5);
  MixupTrace trace;
  const Scene m = mixup_sample(base, db, 5, 3, &trace);
  EXPECT_EQ(trace.placed.size(), 1u);
  EXPECT_EQ(trace.skipped.size(), 1u);
  ASSERT_EQ(m.boxes.size(), 3u);
  EXPECT_DOUBLE_EQ(m.boxes[2].x, 40.0);
  EXPECT_EQ(count_points_in_box(m.points, m.boxes[2]), 8u);
}

TEST(AugmentScene, DeterministicForASeed) {
  const Scene s = two_car_scene();
  const GtDatabase db = build_gt_database(std::vector<Scene>{s}, 0.3, 5);
  const AugmentConfig cfg;
  const Scene a = augment_scene(s, &db, cfg, 11), b = augment_scene(s, &db, cfg, 11);
  EXPECT_EQ(a.points, b.points);
  EXPECT_EQ(a.boxes, b.boxes);
}

}  // namespace
}  // namespace fastpoint
