// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>

#include "fastpoint/error.hpp"
#include "fastpoint/kitti.hpp"

namespace fastpoint::kitti {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("fastpoint_kitti_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

TEST(Velodyne, LittleEndianFloatRecordsRoundTrip) {
  const PointCloud pts{{1.5, -2.25, 0.125, 0.5}, {10, 20, -1, 0}};
  const auto bytes = encode_velodyne(pts);
  ASSERT_EQ(bytes.size(), 32u);
  float first;
  std::memcpy(&first, bytes.data(), 4);
  EXPECT_EQ(first, 1.5f);
  EXPECT_EQ(decode_velodyne(bytes), pts);
}

TEST(Velodyne, PartialRecordIsTruncated) {
  std::vector<std::byte> bytes(18);
  EXPECT_THROW(decode_velodyne(bytes), TruncatedFile);
  EXPECT_TRUE(decode_velodyne({}).empty());
}

TEST(Velodyne, FileRoundTripAndMissingFile) {
  const auto dir = scratch("velo");
  const PointCloud pts{{0.5, 0.25, -1.0, 0.75}};
  write_velodyne(dir / "a.bin", pts);
  EXPECT_EQ(read_velodyne(dir / "a.bin"), pts);
  EXPECT_THROW(read_velodyne(dir / "missing.bin"), IoError);
}

TEST(Calibration, RigMapsLidarAxesToCamera) {
  const auto c = Calibration::synthetic_rig();
  const Vec3 o = c.lidar_to_rect({0, 0, 0});
  const Vec3 fwd = c.lidar_to_rect({1, 0, 0});
  const Vec3 left = c.lidar_to_rect({0, 1, 0});
  EXPECT_NEAR(fwd.z - o.z, 1.0, 1e-12);
  EXPECT_NEAR(left.x - o.x, -1.0, 1e-12);
  const Vec3 back = c.rect_to_lidar(c.lidar_to_rect({3, -4, 0.5}));
  EXPECT_NEAR(back.x, 3, 1e-9);
  EXPECT_NEAR(back.y, -4, 1e-9);
  EXPECT_NEAR(back.z, 0.5, 1e-9);
}

TEST(Calibration, TextRoundTrip) {
  const auto c = Calibration::synthetic_rig();
  const auto parsed = parse_calibration(format_calibration(c));
  for (int i = 0; i < 12; ++i) EXPECT_NEAR(parsed.tr_velo_to_cam[i], c.tr_velo_to_cam[i], 1e-9);
  for (int i = 0; i < 12; ++i) EXPECT_NEAR(parsed.p2[i], c.p2[i], 1e-6);
}

TEST(Calibration, MissingKeysAndBadRotationsAreRejected) {
  EXPECT_THROW(parse_calibration("P2: 1 0 0 0 0 1 0 0 0 0 1 0\n"), MalformedCalibration);
  Calibration c;
  c.r0_rect = {2, 0, 0, 0, 1, 0, 0, 0, 1};
  EXPECT_THROW(validate(c), MalformedCalibration);
}

TEST(Difficulty, DevkitLevels) {
  EXPECT_EQ(classify_difficulty(45, 0, 0.1), Difficulty::kEasy);
  EXPECT_EQ(classify_difficulty(30, 0, 0.1), Difficulty::kModerate);
  EXPECT_EQ(classify_difficulty(45, 1, 0.1), Difficulty::kModerate);
  EXPECT_EQ(classify_difficulty(30, 2, 0.4), Difficulty::kHard);
  EXPECT_EQ(classify_difficulty(20, 0, 0.0), Difficulty::kIgnored);
  EXPECT_EQ(classify_difficulty(45, 3, 0.0), Difficulty::kIgnored);
}

TEST(Labels, CameraLineBecomesLidarBox) {
  const auto calib = Calibration::synthetic_rig();
  // A car 10 m ahead facing forward in LiDAR, i.e. rotation_y = -pi/2.
  const Vec3 bottom = calib.lidar_to_rect({10, 2, -1.7});
  char line[256];
  std::snprintf(line, sizeof line, "Car 0.00 0 -1.57 100 150 200 200 1.5 1.6 3.9 %.6f %.6f %.6f -1.570796",
                bottom.x, bottom.y, bottom.z);
  const FrameLabel l = parse_label_line(line, calib);
  EXPECT_EQ(l.cls, ObjectClass::kCar);
  EXPECT_EQ(l.difficulty, Difficulty::kEasy);
  EXPECT_NEAR(l.box.x, 10, 1e-5);
  EXPECT_NEAR(l.box.y, 2, 1e-5);
  EXPECT_NEAR(l.box.z, -1.7 + 0.75, 1e-5);
  EXPECT_NEAR(l.box.theta, 0.0, 1e-6);
  EXPECT_DOUBLE_EQ(l.box.l, 3.9);
  EXPECT_FALSE(l.score.has_value());
}

TEST(Labels, ResultLinesCarryScoreAndRoundTrip) {
  const auto calib = Calibration::synthetic_rig();
  FrameLabel l;
  l.cls = ObjectClass::kCar;
  l.type_name = "Car";
  l.box = {12.5, -3.25, -0.9, 4.1, 1.7, 1.5, 0.6};
  l.bbox2d = {10, 20, 30, 80};
  l.score = 0.875;
  const FrameLabel back = parse_label_line(format_label_line(l, calib), calib);
  EXPECT_NEAR(back.box.x, l.box.x, 1e-5);
  EXPECT_NEAR(back.box.y, l.box.y, 1e-5);
  EXPECT_NEAR(back.box.z, l.box.z, 1e-5);
  EXPECT_NEAR(back.box.theta, l.box.theta, 1e-5);
  ASSERT_TRUE(back.score.has_value());
  EXPECT_NEAR(*back.score, 0.875, 1e-9);
}

TEST(Labels, MalformedLinesAndClasses) {
  const auto calib = Calibration::identity();
  EXPECT_THROW(parse_label_line("Car 0 0 0", calib), MalformedLabel);
  EXPECT_THROW(parse_label_line("Car 0 0 0 0 0 0 0 1 1 x 0 0 0 0", calib), MalformedLabel);
  EXPECT_THROW(parse_label_line("Car 0 0 0 0 0 10 40 0 1 1 0 0 0 0", calib), MalformedLabel);
  const auto dc = parse_label_line("DontCare -1 -1 -10 0 0 10 10 -1 -1 -1 -1000 -1000 -1000 -10", calib);
  EXPECT_EQ(dc.cls, ObjectClass::kDontCare);
  EXPECT_EQ(dc.difficulty, Difficulty::kIgnored);
  EXPECT_EQ(class_from_name("Van"), ObjectClass::kOther);
  EXPECT_EQ(class_from_name("Pedestrian"), ObjectClass::kPedestrian);
}

TEST(Labels, FileParsingSkipsBlankLines) {
  const auto calib = Calibration::identity();
  const auto labels = parse_labels("Car 0 0 0 0 0 10 40 1 1 1 0 0 0 0\n\n", calib);
  EXPECT_EQ(labels.size(), 1u);
}

TEST(Crop, HalfOpenIntervalsKeepOrder) {
  const CropRange r{{0, 10}, {-5, 5}, {-3, 1}};
  const PointCloud pts{{0, 0, 0, 0}, {10, 0, 0, 0}, {5, -5, -3, 0}, {5, 5, 0, 0}, {1, 1, 0.99, 0}};
  const auto kept = crop_to_range(pts, r);
  ASSERT_EQ(kept.size(), 3u);
  EXPECT_EQ(kept[0], pts[0]);
  EXPECT_EQ(kept[1], pts[2]);
  EXPECT_EQ(kept[2], pts[4]);
}

TEST(FrameIds, OnePerNonEmptyLine) {
  const auto dir = scratch("ids");
  write_text_file(dir / "train.txt", "000001\n\n000007\n");
  EXPECT_EQ(read_frame_ids(dir / "train.txt"), (std::vector<std::string>{"000001", "000007"}));
}

TEST(Projection, BoxInFrontProjectsToFiniteBounds) {
  Calibration c = Calibration::synthetic_rig();
  const auto b = project_box_2d({15, 0, -0.8, 3.9, 1.6, 1.5, 0}, c);
  EXPECT_LT(b[0], b[2]);
  EXPECT_LT(b[1], b[3]);
}

}  // namespace
}  // namespace fastpoint::kitti
