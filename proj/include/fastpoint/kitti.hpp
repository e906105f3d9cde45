// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

/// \file
/// KITTI object-detection file formats: velodyne scans, label lines and
/// calibration. Labels are converted to LiDAR-frame boxes on ingestion.

#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fastpoint/geometry.hpp"
#include "fastpoint/point_cloud.hpp"

namespace fastpoint::kitti {

/// Row-major 3x3 and 3x4 matrices as stored in KITTI calibration files.
using Mat3 = std::array<double, 9>;
using Mat34 = std::array<double, 12>;

struct Calibration {
  Mat3 r0_rect{1, 0, 0, 0, 1, 0, 0, 0, 1};
  Mat34 tr_velo_to_cam{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0};
  Mat34 p2{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0};

  /// LiDAR point to rectified camera coordinates.
  Vec3 lidar_to_rect(const Vec3& p) const;
  /// Rectified camera coordinates back to the LiDAR frame.
  Vec3 rect_to_lidar(const Vec3& p) const;
  /// Rectified camera point to image pixel (u, v) through P2.
  Vec2 project_rect(const Vec3& p) const;

  /// All-identity transforms.
  static Calibration identity();
  /// Representative KITTI-like rig used for synthetic data: LiDAR x maps to
  /// camera z, LiDAR y to camera -x, LiDAR z to camera -y.
  static Calibration synthetic_rig();
};

/// Checks the rotation parts are orthonormal within 1e-4.
void validate(const Calibration& calib);

Calibration parse_calibration(std::string_view text);
Calibration read_calibration(const std::filesystem::path& path);
std::string format_calibration(const Calibration& calib);

enum class ObjectClass { kCar, kPedestrian, kCyclist, kDontCare, kOther };

enum class Difficulty { kEasy = 0, kModerate = 1, kHard = 2, kIgnored = 3 };

std::string_view class_name(ObjectClass cls);
ObjectClass class_from_name(std::string_view name);
std::string_view difficulty_name(Difficulty d);

/// Per-level admission thresholds (devkit convention by default).
struct DifficultyThresholds {
  std::array<double, 3> min_height_px{40.0, 25.0, 25.0};
  std::array<int, 3> max_occlusion{0, 1, 2};
  std::array<double, 3> max_truncation{0.15, 0.30, 0.50};
};

Difficulty classify_difficulty(double bbox_height_px, int occlusion, double truncation,
                               const DifficultyThresholds& thresholds = {});

struct FrameLabel {
  ObjectClass cls = ObjectClass::kOther;
  std::string type_name = "Other";  ///< original type string (Van, Truck, ...)
  Box3D box;                        ///< LiDAR frame, z is the box center
  double truncation = 0.0;
  int occlusion = 0;
  double alpha = 0.0;
  std::array<double, 4> bbox2d{0, 0, 0, 0};  ///< left, top, right, bottom pixels
  Difficulty difficulty = Difficulty::kIgnored;
  std::optional<double> score;  ///< present on detection lines
};

/// Parses a 15-field label line, or a 16-field result line whose last field
/// is the detection score.
FrameLabel parse_label_line(std::string_view line, const Calibration& calib,
                            const DifficultyThresholds& thresholds = {});

/// Inverse of parse_label_line. Appends the score column when present.
std::string format_label_line(const FrameLabel& label, const Calibration& calib);

std::vector<FrameLabel> parse_labels(std::string_view text, const Calibration& calib,
                                     const DifficultyThresholds& thresholds = {});
std::vector<FrameLabel> read_labels(const std::filesystem::path& path, const Calibration& calib,
                                    const DifficultyThresholds& thresholds = {});
void write_labels(const std::filesystem::path& path, std::span<const FrameLabel> labels,
                  const Calibration& calib);

/// Observation angle of an object as stored in the label alpha field.
double observation_angle(const Box3D& box, const Calibration& calib);

/// Image-plane bounds (left, top, right, bottom) of the box corners through
/// P2. Not clipped to any image size; corners closer than 0.1 m to the
/// camera plane are pushed out to 0.1 m.
std::array<double, 4> project_box_2d(const Box3D& box, const Calibration& calib);

/// Decodes little-endian float32 (x, y, z, reflectance) records.
PointCloud decode_velodyne(std::span<const std::byte> bytes);
std::vector<std::byte> encode_velodyne(std::span<const Point> points);

PointCloud read_velodyne(const std::filesystem::path& path);
void write_velodyne(const std::filesystem::path& path, std::span<const Point> points);

/// Keeps points with min <= coord < max on every axis, in input order.
PointCloud crop_to_range(std::span<const Point> points, const CropRange& range);

/// One frame id per non-empty line (ImageSets/train.txt style).
std::vector<std::string> read_frame_ids(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace fastpoint::kitti
