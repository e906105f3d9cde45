// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastpoint/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

#include "fastpoint/simd/kernels.hpp"

namespace fastpoint {

double normalize_angle(double theta) {
  double a = std::remainder(theta, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  return a;
}

double wrap_half_pi(double theta) {
  double a = std::remainder(theta, kPi);
  if (a <= -kPi / 2.0) a += kPi;
  return a;
}

bool is_valid(const Box3D& b) {
  return std::isfinite(b.x) && std::isfinite(b.y) && std::isfinite(b.z) && b.l > 0.0 &&
         b.w > 0.0 && b.h > 0.0 && std::isfinite(b.l) && std::isfinite(b.w) &&
         std::isfinite(b.h) && std::isfinite(b.theta);
}

bool is_valid(const BoxBEV& b) {
  return std::isfinite(b.x) && std::isfinite(b.y) && b.l > 0.0 && b.w > 0.0 &&
         std::isfinite(b.l) && std::isfinite(b.w) && std::isfinite(b.theta);
}

BoxBEV to_bev(const Box3D& b) { return {b.x, b.y, b.l, b.w, b.theta}; }

BevCorners corners_bev(const BoxBEV& b) {
  const double c = std::cos(b.theta);
  const double s = std::sin(b.theta);
  const double hl = 0.5 * b.l;
  const double hw = 0.5 * b.w;
  // Box-frame offsets, counter-clockwise from (+l/2, +w/2).
  const std::array<Vec2, 4> local{{{hl, hw}, {-hl, hw}, {-hl, -hw}, {hl, -hw}}};
  BevCorners out;
  for (std::size_t i = 0; i < 4; ++i) {
    out[i] = {b.x + c * local[i].x - s * local[i].y, b.y + s * local[i].x + c * local[i].y};
  }
  return out;
}

CornerSet box_corners(const Box3D& b) {
  const BevCorners planar = corners_bev(to_bev(b));
  CornerSet out;
  for (std::size_t i = 0; i < 4; ++i) {
    out[i] = {planar[i].x, planar[i].y, b.z - 0.5 * b.h};
    out[i + 4] = {planar[i].x, planar[i].y, b.z + 0.5 * b.h};
  }
  return out;
}

double polygon_area(std::span<const Vec2> polygon) {
  const std::size_t n = polygon.size();
  if (n < 3) return 0.0;
  double twice = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& p = polygon[i];
    const Vec2& q = polygon[(i + 1) % n];
    twice += p.x * q.y - q.x * p.y;
  }
  return 0.5 * twice;
}

namespace {

// Fixed-capacity polygon; clipping a quad by four half-planes yields at most 8 vertices.
struct Polygon {
  std::array<Vec2, 16> v{};
  std::size_t n = 0;
  void push(const Vec2& p) { v[n++] = p; }
};

inline double edge_side(const Vec2& e0, const Vec2& e1, const Vec2& p) {
  return (e1.x - e0.x) * (p.y - e0.y) - (e1.y - e0.y) * (p.x - e0.x);
}

// Sutherland-Hodgman step: keep the part of `in` left of the directed edge e0->e1.
Polygon clip_half_plane(const Polygon& in, const Vec2& e0, const Vec2& e1) {
  Polygon out;
  if (in.n == 0) return out;
  for (std::size_t i = 0; i < in.n; ++i) {
    const Vec2& cur = in.v[i];
    const Vec2& prev = in.v[(i + in.n - 1) % in.n];
    const double s_cur = edge_side(e0, e1, cur);
    const double s_prev = edge_side(e0, e1, prev);
    const bool cur_in = s_cur >= 0.0;
    const bool prev_in = s_prev >= 0.0;
    if (cur_in != prev_in) {
      const double t = s_prev / (s_prev - s_cur);
      out.push({prev.x + t * (cur.x - prev.x), prev.y + t * (cur.y - prev.y)});
    }
    if (cur_in) out.push(cur);
  }
  return out;
}

bool canonical_less(const BoxBEV& a, const BoxBEV& b) {
  return std::tie(a.x, a.y, a.l, a.w, a.theta) < std::tie(b.x, b.y, b.l, b.w, b.theta);
}

double intersection_area_ordered(const BoxBEV& a, const BoxBEV& b) {
  const double ra = 0.5 * std::hypot(a.l, a.w);
  const double rb = 0.5 * std::hypot(b.l, b.w);
  if (std::hypot(a.x - b.x, a.y - b.y) > ra + rb) return 0.0;

  // Clip in a frame centered between the boxes to keep magnitudes small.
  const double ox = 0.5 * (a.x + b.x);
  const double oy = 0.5 * (a.y + b.y);
  BoxBEV la = a;
  BoxBEV lb = b;
  la.x -= ox;
  la.y -= oy;
  lb.x -= ox;
  lb.y -= oy;
  const BevCorners ca = corners_bev(la);
  const BevCorners cb = corners_bev(lb);

  Polygon poly;
  for (const Vec2& p : ca) poly.push(p);
  for (std::size_t i = 0; i < 4 && poly.n > 0; ++i) {
    poly = clip_half_plane(poly, cb[i], cb[(i + 1) % 4]);
  }
  const double area = polygon_area(std::span<const Vec2>(poly.v.data(), poly.n));
  return area < kAreaEpsilon ? 0.0 : area;
}

}  // namespace

double intersection_area_bev(const BoxBEV& a, const BoxBEV& b) {
  return canonical_less(b, a) ? intersection_area_ordered(b, a) : intersection_area_ordered(a, b);
}

double iou_bev(const BoxBEV& a, const BoxBEV& b) {
  const double inter = intersection_area_bev(a, b);
  if (inter == 0.0) return 0.0;
  const double uni = a.l * a.w + b.l * b.w - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double iou_3d(const Box3D& a, const Box3D& b) {
  const double z_lo = std::max(a.z - 0.5 * a.h, b.z - 0.5 * b.h);
  const double z_hi = std::min(a.z + 0.5 * a.h, b.z + 0.5 * b.h);
  const double overlap_z = z_hi - z_lo;
  if (overlap_z <= 0.0) return 0.0;
  const double inter_bev = intersection_area_bev(to_bev(a), to_bev(b));
  if (inter_bev == 0.0) return 0.0;
  const double inter = inter_bev * overlap_z;
  const double uni = a.l * a.w * a.h + b.l * b.w * b.h - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

namespace {

inline Vec2 rotate(double x, double y, double c, double s) { return {x * c - y * s, x * s + y * c}; }

}  // namespace

Vec3 canonize(const Box3D& frame, const Vec3& p) {
  const double c = std::cos(frame.theta);
  const double s = std::sin(frame.theta);
  const double dx = p.x - frame.x;
  const double dy = p.y - frame.y;
  return {dx * c + dy * s, dy * c - dx * s, p.z - frame.z};
}

Vec3 uncanonize(const Box3D& frame, const Vec3& p) {
  const Vec2 r = rotate(p.x, p.y, std::cos(frame.theta), std::sin(frame.theta));
  return {r.x + frame.x, r.y + frame.y, p.z + frame.z};
}

Vec3 canonize(const BoxBEV& frame, const Vec3& p) {
  const double c = std::cos(frame.theta);
  const double s = std::sin(frame.theta);
  const double dx = p.x - frame.x;
  const double dy = p.y - frame.y;
  return {dx * c + dy * s, dy * c - dx * s, p.z};
}

Vec3 uncanonize(const BoxBEV& frame, const Vec3& p) {
  const Vec2 r = rotate(p.x, p.y, std::cos(frame.theta), std::sin(frame.theta));
  return {r.x + frame.x, r.y + frame.y, p.z};
}

Box3D canonize(const Box3D& frame, const Box3D& subject) {
  const Vec3 c = canonize(frame, Vec3{subject.x, subject.y, subject.z});
  return {c.x, c.y, c.z, subject.l, subject.w, subject.h,
          normalize_angle(subject.theta - frame.theta)};
}

Box3D uncanonize(const Box3D& frame, const Box3D& subject) {
  const Vec3 c = uncanonize(frame, Vec3{subject.x, subject.y, subject.z});
  return {c.x, c.y, c.z, subject.l, subject.w, subject.h,
          normalize_angle(subject.theta + frame.theta)};
}

Point canonize(const Box3D& frame, const Point& p) {
  const Vec3 c = canonize(frame, Vec3{p.x, p.y, p.z});
  return {c.x, c.y, c.z, p.r};
}

PointCloud canonize(const Box3D& frame, std::span<const Point> points) {
  PointCloud out;
  out.reserve(points.size());
  for (const Point& p : points) out.push_back(canonize(frame, p));
  return out;
}

namespace {

simd::BoxMaskParams mask_params(const Box3D& box, double margin, MarginMode mode) {
  simd::BoxMaskParams params;
  params.cx = box.x;
  params.cy = box.y;
  params.cz = box.z;
  params.cos_t = std::cos(box.theta);
  params.sin_t = std::sin(box.theta);
  params.half_l = 0.5 * box.l + margin;
  params.half_w = 0.5 * box.w + margin;
  params.half_h = mode == MarginMode::kAllFaces ? 0.5 * box.h + margin
                                                : std::numeric_limits<double>::infinity();
  return params;
}

std::vector<std::uint8_t> box_mask(std::span<const Point> points, const Box3D& box, double margin,
                                   MarginMode mode) {
  std::vector<std::uint8_t> mask(points.size(), 0);
  if (!points.empty()) {
    simd::kernels().box_mask(points.data(), points.size(), mask_params(box, margin, mode),
                             mask.data());
  }
  return mask;
}

}  // namespace

std::vector<std::size_t> points_in_box_indices(std::span<const Point> points, const Box3D& box,
                                               double margin, MarginMode mode) {
  const std::vector<std::uint8_t> mask = box_mask(points, box, margin, mode);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) out.push_back(i);
  }
  return out;
}

PointCloud points_in_box(std::span<const Point> points, const Box3D& box, double margin,
                         MarginMode mode) {
  const std::vector<std::uint8_t> mask = box_mask(points, box, margin, mode);
  PointCloud out;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) out.push_back(points[i]);
  }
  return out;
}

std::size_t count_points_in_box(std::span<const Point> points, const Box3D& box) {
  const std::vector<std::uint8_t> mask = box_mask(points, box, 0.0, MarginMode::kAllFaces);
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

}  // namespace fastpoint
