// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

namespace fastpoint {

/// One LiDAR return. Coordinates in meters, reflectance in [0, 1].
/// Layout is four packed doubles; the SIMD containment kernels rely on it.
struct Point {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double r = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

static_assert(sizeof(Point) == 4 * sizeof(double));

using PointCloud = std::vector<Point>;

struct AxisRange {
  double min = 0.0;
  double max = 0.0;
  double extent() const { return max - min; }
  /// Half-open membership: min <= v < max.
  bool contains(double v) const { return v >= min && v < max; }
};

/// Axis-aligned region of interest, one half-open interval per axis.
struct CropRange {
  AxisRange x;
  AxisRange y;
  AxisRange z;
  bool contains(const Point& p) const { return x.contains(p.x) && y.contains(p.y) && z.contains(p.z); }
};

}  // namespace fastpoint
