// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "fastpoint/geometry.hpp"
#include "fastpoint/kitti.hpp"
#include "fastpoint/point_cloud.hpp"

namespace fastpoint {

/// A point cloud with its LiDAR-frame ground truth. `classes` parallels `boxes`.
struct Scene {
  std::string id;
  PointCloud points;
  std::vector<Box3D> boxes;
  std::vector<kitti::ObjectClass> classes;
};

}  // namespace fastpoint
