// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

/// \file
/// Oriented box math: corners, rotated IoU, canonization and containment.
///
/// Frame convention: +x forward, +y left, +z up (LiDAR frame). Yaw is
/// counter-clockwise about +z, measured from +x, normalized to (-pi, pi].

#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "fastpoint/point_cloud.hpp"

namespace fastpoint {

inline constexpr double kPi = 3.14159265358979323846;

/// Areas below this are treated as exactly zero by the polygon clipper.
inline constexpr double kAreaEpsilon = 1e-12;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

/// Oriented 3D box. (x, y, z) is the geometric center; l runs along the
/// heading, w across it, h vertically.
struct Box3D {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double l = 1.0;
  double w = 1.0;
  double h = 1.0;
  double theta = 0.0;

  friend bool operator==(const Box3D&, const Box3D&) = default;
};

/// Bird's-eye-view footprint of a Box3D.
struct BoxBEV {
  double x = 0.0;
  double y = 0.0;
  double l = 1.0;
  double w = 1.0;
  double theta = 0.0;

  friend bool operator==(const BoxBEV&, const BoxBEV&) = default;
};

using BevCorners = std::array<Vec2, 4>;

/// Eight corners: bottom face counter-clockwise starting at the
/// (+l/2, +w/2, -h/2) corner of the box frame, then the top face in the
/// same planar order.
using CornerSet = std::array<Vec3, 8>;

/// Wrap an angle to (-pi, pi].
double normalize_angle(double theta);

/// Wrap an angle to (-pi/2, pi/2]; headings that differ by pi map together.
double wrap_half_pi(double theta);

bool is_valid(const Box3D& b);
bool is_valid(const BoxBEV& b);

BoxBEV to_bev(const Box3D& b);

BevCorners corners_bev(const BoxBEV& b);
CornerSet box_corners(const Box3D& b);

/// Signed shoelace area of a polygon (positive when counter-clockwise).
double polygon_area(std::span<const Vec2> polygon);

/// Area of the intersection of two oriented rectangles.
double intersection_area_bev(const BoxBEV& a, const BoxBEV& b);

/// Rotated BEV IoU. Exactly symmetric in its arguments.
double iou_bev(const BoxBEV& a, const BoxBEV& b);

double iou_3d(const Box3D& a, const Box3D& b);

/// Express a world point in the frame of `frame`: translate by -center, then
/// rotate by -theta about +z.
Vec3 canonize(const Box3D& frame, const Vec3& p);
Vec3 uncanonize(const Box3D& frame, const Vec3& p);

/// BEV frames translate only in the plane; z passes through untouched.
Vec3 canonize(const BoxBEV& frame, const Vec3& p);
Vec3 uncanonize(const BoxBEV& frame, const Vec3& p);

/// Express a box in the frame of `frame`. canonize(f, f) is the box with the
/// same dims at the origin with theta = 0.
Box3D canonize(const Box3D& frame, const Box3D& subject);
Box3D uncanonize(const Box3D& frame, const Box3D& subject);

Point canonize(const Box3D& frame, const Point& p);
PointCloud canonize(const Box3D& frame, std::span<const Point> points);

enum class MarginMode {
  kAllFaces,  ///< margin on all six faces
  kBevOnly,   ///< margin on the four side faces, z unbounded
};

/// Indices of points inside `box` grown by `margin` meters; input order kept.
/// Boundaries are inclusive.
std::vector<std::size_t> points_in_box_indices(std::span<const Point> points, const Box3D& box,
                                               double margin = 0.0,
                                               MarginMode mode = MarginMode::kAllFaces);

PointCloud points_in_box(std::span<const Point> points, const Box3D& box, double margin = 0.0,
                         MarginMode mode = MarginMode::kAllFaces);

/// Number of points inside the box (no margin).
std::size_t count_points_in_box(std::span<const Point> points, const Box3D& box);

}  // namespace fastpoint
