// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastpoint/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fastpoint/error.hpp"

namespace fastpoint {

std::vector<std::size_t> nms_rotated(std::span<const BoxBEV> boxes, std::span<const double> scores,
                                     double iou_thresh) {
  if (boxes.size() != scores.size()) throw ShapeMismatch("nms: boxes and scores differ in length");
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&scores](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<std::size_t> kept;
  for (std::size_t i : order) {
    bool keep = true;
    for (std::size_t k : kept) {
      if (iou_bev(boxes[i], boxes[k]) > iou_thresh) {
        keep = false;
        break;
      }
    }
    if (keep) kept.push_back(i);
  }
  return kept;
}

std::vector<Detection> decode_detections(const nn::Tensor& cls_map, const nn::Tensor& reg_map,
                                         const AnchorSet& anchors, double score_thresh) {
  if (cls_map.numel() != anchors.size() || reg_map.numel() != anchors.size() * 7) {
    throw ShapeMismatch("maps " + nn::shape_str(cls_map.shape()) + " / " + nn::shape_str(reg_map.shape()) +
                        " do not fit " + std::to_string(anchors.size()) + " anchors");
  }
  const auto cls = cls_map.values();
  const auto reg = reg_map.values();
  std::vector<Detection> out;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    if (!(cls[i] >= score_thresh)) continue;
    RpnDelta d;
    std::copy_n(reg.begin() + static_cast<std::ptrdiff_t>(i * 7), 7, d.begin());
    Detection det;
    det.box = decode_rpn(d, anchors.boxes[i], anchors.diagonals[i]);
    det.score = cls[i];
    det.anchor = i;
    out.push_back(det);
  }
  std::stable_sort(out.begin(), out.end(), [](const Detection& a, const Detection& b) { return a.score > b.score; });
  return out;
}

std::vector<Detection> select_detections(std::span<const Detection> dets, double iou_thresh, std::size_t top_k) {
  std::vector<BoxBEV> bev;
  std::vector<double> scores;
  for (const auto& d : dets) {
    bev.push_back(to_bev(d.box));
    scores.push_back(d.score);
  }
  std::vector<Detection> out;
  for (std::size_t i : nms_rotated(bev, scores, iou_thresh)) {
    if (out.size() == top_k) break;
    out.push_back(dets[i]);
  }
  return out;
}

Box3D corners_to_box(const CornerSet& c) {
  Vec3 center{};
  for (const Vec3& p : c) {
    center.x += p.x;
    center.y += p.y;
    center.z += p.z;
  }
  center.x /= 8.0;
  center.y /= 8.0;
  center.z /= 8.0;
  // Length edges run from corner 1 to 0 and 2 to 3 on both faces; width
  // edges from 3 to 0 and 2 to 1.
  double lx = 0, ly = 0, l = 0, w = 0, h = 0;
  for (std::size_t f = 0; f < 8; f += 4) {
    const std::array<std::pair<std::size_t, std::size_t>, 2> len{{{f + 1, f + 0}, {f + 2, f + 3}}};
    const std::array<std::pair<std::size_t, std::size_t>, 2> wid{{{f + 3, f + 0}, {f + 2, f + 1}}};
    for (auto [a, b] : len) {
      const double dx = c[b].x - c[a].x, dy = c[b].y - c[a].y;
      lx += dx;
      ly += dy;
      l += std::hypot(dx, dy);
    }
    for (auto [a, b] : wid) w += std::hypot(c[b].x - c[a].x, c[b].y - c[a].y);
  }
  for (std::size_t i = 0; i < 4; ++i) h += c[i + 4].z - c[i].z;
  l /= 4.0;
  w /= 4.0;
  h /= 4.0;
  if (l < 1e-9 || w < 1e-9 || h < 1e-9 || std::hypot(lx, ly) < 1e-9) {
    throw DegenerateCorners("edge lengths l=" + std::to_string(l) + " w=" + std::to_string(w) + " h=" + std::to_string(h));
  }
  return {center.x, center.y, center.z, l, w, h, normalize_angle(std::atan2(ly, lx))};
}

std::string format_detections(std::span<const Detection> dets, const kitti::Calibration& calib) {
  std::string out;
  for (const auto& d : dets) {
    kitti::FrameLabel label;
    label.cls = d.cls;
    label.type_name = std::string(kitti::class_name(d.cls));
    label.box = d.box;
    label.truncation = -1.0;
    label.occlusion = -1;
    label.alpha = kitti::observation_angle(d.box, calib);
    label.bbox2d = kitti::project_box_2d(d.box, calib);
    label.score = d.score;
    out += kitti::format_label_line(label, calib);
    out += '\n';
  }
  return out;
}

std::vector<Detection> parse_detections(std::string_view text, const kitti::Calibration& calib) {
  std::vector<Detection> out;
  for (const auto& label : kitti::parse_labels(text, calib)) {
    Detection d;
    d.box = label.box;
    d.cls = label.cls;
    d.score = label.score.value_or(1.0);
    out.push_back(d);
  }
  return out;
}

}  // namespace fastpoint
