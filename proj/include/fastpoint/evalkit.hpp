// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

/// \file
/// KITTI-style average precision for 3D and BEV boxes with difficulty and
/// range buckets.
///
/// Key-value dump: one `key = value` line per cell with keys
/// `ap.<metric>.<class>.<difficulty>.iou<thresh>.range<min>-<max>` and
/// companion `n_gt`, `tp`, `fp` keys.

#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fastpoint/kitti.hpp"
#include "fastpoint/postprocess.hpp"

namespace fastpoint::eval {

using IouFn = std::function<double(const Box3D&, const Box3D&)>;

double iou_bev_boxes(const Box3D& a, const Box3D& b);

enum class Outcome : std::int8_t {
  kFalsePositive = 0,
  kTruePositive = 1,
  kIgnored = 2,  ///< matched an ignored gt; counts as neither
};

struct MatchResult {
  std::vector<Outcome> outcome;   ///< per detection
  std::vector<long> matched_gt;   ///< gt index for true positives, else -1
};

/// `dets` must be sorted by descending score. Each detection in turn takes
/// the highest-IoU unmatched non-ignored gt with IoU >= thresh (lowest index
/// on ties); failing that, a detection with IoU >= thresh to an ignored gt
/// is ignored; otherwise it is a false positive.
MatchResult match_detections(std::span<const Box3D> dets, std::span<const Box3D> gts,
                             std::span<const bool> gt_ignored, const IouFn& iou, double thresh);

enum class ApMode { kR11, kR40 };

struct PrPoint {
  double precision = 0.0;
  double recall = 0.0;
};

/// One point per counted detection (tp or fp set), in order.
std::vector<PrPoint> pr_curve(std::span<const bool> tp, std::span<const bool> fp, std::size_t n_gt);

/// `tp` and `fp` are per-detection flags in score order; detections with
/// neither flag set are skipped. R11 averages the interpolated precision at
/// recall 0, 0.1, ..., 1; R40 at 1/40, 2/40, ..., 1. Returns 0 when n_gt is 0.
double average_precision(std::span<const bool> tp, std::span<const bool> fp, std::size_t n_gt, ApMode mode);

enum class Metric { k3D, kBev };

struct RangeBucket {
  double min = 0.0;
  double max = std::numeric_limits<double>::infinity();
  bool contains(double d) const { return d >= min && d < max; }
};

struct EvalCell {
  Metric metric = Metric::k3D;
  double iou_thresh = 0.7;
  kitti::Difficulty difficulty = kitti::Difficulty::kModerate;
  RangeBucket range;
  kitti::ObjectClass cls = kitti::ObjectClass::kCar;
};

struct EvalResult {
  EvalCell cell;
  double ap = 0.0;
  std::size_t n_gt = 0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::vector<PrPoint> curve;
};

using DetectionsById = std::map<std::string, std::vector<Detection>>;
using LabelsById = std::map<std::string, std::vector<kitti::FrameLabel>>;

/// A gt of the cell's class is evaluated when its difficulty is at or below
/// the cell's level and its BEV center distance from the origin falls in the
/// range bucket; otherwise it is ignored. DontCare labels are ignored gts.
/// Throws MissingFrame when detections reference a frame without labels.
std::vector<EvalResult> evaluate(const DetectionsById& dets, const LabelsById& gts,
                                 std::span<const EvalCell> cells, ApMode mode = ApMode::kR11);

std::string cell_key(const EvalCell& cell);
std::string format_report(std::span<const EvalResult> results);
std::string format_kv(std::span<const EvalResult> results);

}  // namespace fastpoint::eval
