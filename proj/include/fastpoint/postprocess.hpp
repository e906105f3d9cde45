// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

/// \file
/// Turning network outputs into scored boxes: decoding, rotated NMS, top-K
/// and the corner-to-box fit used after refinement.
///
/// Detection dump: one KITTI label line per detection (type, truncation,
/// occlusion, alpha, 2D box, h w l, camera-frame bottom center, rotation_y)
/// followed by a score column.

#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "fastpoint/anchors.hpp"
#include "fastpoint/geometry.hpp"
#include "fastpoint/kitti.hpp"
#include "fastpoint/nn/tensor.hpp"

namespace fastpoint {

struct Detection {
  Box3D box;
  double score = 0.0;
  kitti::ObjectClass cls = kitti::ObjectClass::kCar;
  std::size_t anchor = std::numeric_limits<std::size_t>::max();
};

/// Greedy suppression in descending score order (lower index first on equal
/// scores). A box is dropped when its BEV IoU with a kept box exceeds
/// iou_thresh. Returns kept indices in selection order.
std::vector<std::size_t> nms_rotated(std::span<const BoxBEV> boxes, std::span<const double> scores,
                                     double iou_thresh);

/// Every anchor with probability >= score_thresh, decoded, sorted by score
/// descending then anchor index. cls_map holds one value per anchor and
/// reg_map seven, both in flat anchor order.
std::vector<Detection> decode_detections(const nn::Tensor& cls_map, const nn::Tensor& reg_map,
                                         const AnchorSet& anchors, double score_thresh);

/// NMS over detections, then the first `top_k` survivors.
std::vector<Detection> select_detections(std::span<const Detection> dets, double iou_thresh, std::size_t top_k);

/// Fits an oriented box to 8 corners in canonical order: center = corner
/// mean, yaw from the mean length-edge direction, dims from mean edge
/// lengths. Throws DegenerateCorners when an edge is shorter than 1e-9 m.
Box3D corners_to_box(const CornerSet& corners);

std::string format_detections(std::span<const Detection> dets, const kitti::Calibration& calib);
std::vector<Detection> parse_detections(std::string_view text, const kitti::Calibration& calib);

}  // namespace fastpoint
