// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastpoint/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cctype>
#include <cstdio>
#include <memory>

#include "fastpoint/error.hpp"

namespace fastpoint::eval {

double iou_bev_boxes(const Box3D& a, const Box3D& b) { return iou_bev(to_bev(a), to_bev(b)); }

MatchResult match_detections(std::span<const Box3D> dets, std::span<const Box3D> gts,
                             std::span<const bool> gt_ignored, const IouFn& iou, double thresh) {
  if (gt_ignored.size() != gts.size()) throw ShapeMismatch("one ignore flag per gt required");
  MatchResult r;
  r.outcome.assign(dets.size(), Outcome::kFalsePositive);
  r.matched_gt.assign(dets.size(), -1);
  std::vector<bool> taken(gts.size(), false);
  for (std::size_t d = 0; d < dets.size(); ++d) {
    long best = -1;
    double best_iou = -1.0;
    bool hits_ignored = false;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const double v = iou(dets[d], gts[g]);
      if (v < thresh) continue;
      if (gt_ignored[g]) {
        hits_ignored = true;
      } else if (!taken[g] && v > best_iou) {
        best_iou = v;
        best = static_cast<long>(g);
      }
    }
    if (best >= 0) {
      taken[static_cast<std::size_t>(best)] = true;
      r.outcome[d] = Outcome::kTruePositive;
      r.matched_gt[d] = best;
    } else if (hits_ignored) {
      r.outcome[d] = Outcome::kIgnored;
    }
  }
  return r;
}

std::vector<PrPoint> pr_curve(std::span<const bool> tp, std::span<const bool> fp, std::size_t n_gt) {
  if (tp.size() != fp.size()) throw ShapeMismatch("tp and fp flags differ in length");
  std::vector<PrPoint> curve;
  std::size_t ctp = 0, cnt = 0;
  for (std::size_t i = 0; i < tp.size(); ++i) {
    if (!tp[i] && !fp[i]) continue;
    ++cnt;
    if (tp[i]) ++ctp;
    curve.push_back({static_cast<double>(ctp) / static_cast<double>(cnt),
                     n_gt ? static_cast<double>(ctp) / static_cast<double>(n_gt) : 0.0});
  }
  return curve;
}

double average_precision(std::span<const bool> tp, std::span<const bool> fp, std::size_t n_gt, ApMode mode) {
  if (tp.size() != fp.size()) throw ShapeMismatch("tp and fp flags differ in length");
  if (n_gt == 0) return 0.0;
  // (cumulative tp, cumulative tp + fp) after each counted detection.
  std::vector<std::pair<std::size_t, std::size_t>> curve;
  std::size_t ctp = 0, cnt = 0;
  for (std::size_t i = 0; i < tp.size(); ++i) {
    if (!tp[i] && !fp[i]) continue;
    ++cnt;
    if (tp[i]) ++ctp;
    curve.emplace_back(ctp, cnt);
  }
  const std::size_t steps = mode == ApMode::kR11 ? 10 : 40;
  const std::size_t first = mode == ApMode::kR11 ? 0 : 1;
  double total = 0.0;
  for (std::size_t k = first; k <= steps; ++k) {
    // recall >= k / steps  <=>  tp * steps >= k * n_gt, exactly in integers.
    double best = 0.0;
    for (const auto& [t, n] : curve) {
      if (t * steps >= k * n_gt) best = std::max(best, static_cast<double>(t) / static_cast<double>(n));
    }
    total += best;
  }
  return total / static_cast<double>(steps + 1 - first);
}

namespace {

// std::vector<bool> has no contiguous storage to view as a span.
std::unique_ptr<bool[]> to_array(const std::vector<bool>& v) {
  std::unique_ptr<bool[]> out(new bool[v.size()]);
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i];
  return out;
}

struct Scored {
  double score;
  bool tp;
  bool fp;
};

}  // namespace

std::vector<EvalResult> evaluate(const DetectionsById& dets, const LabelsById& gts,
                                 std::span<const EvalCell> cells, ApMode mode) {
  for (const auto& [id, _] : dets) {
    if (!gts.count(id)) throw MissingFrame("no labels for frame '" + id + "'");
  }
  std::vector<EvalResult> results;
  for (const EvalCell& cell : cells) {
    const IouFn iou = cell.metric == Metric::k3D ? IouFn(iou_3d) : IouFn(iou_bev_boxes);
    std::vector<Scored> all;
    EvalResult res;
    res.cell = cell;
    for (const auto& [id, labels] : gts) {
      std::vector<Box3D> gt_boxes;
      std::vector<bool> ignored;
      for (const auto& l : labels) {
        if (l.cls == kitti::ObjectClass::kDontCare) {
          gt_boxes.push_back(l.box);
          ignored.push_back(true);
          continue;
        }
        if (l.cls != cell.cls) continue;
        const bool level_ok = l.difficulty != kitti::Difficulty::kIgnored &&
                              static_cast<int>(l.difficulty) <= static_cast<int>(cell.difficulty);
        const bool range_ok = cell.range.contains(std::hypot(l.box.x, l.box.y));
        gt_boxes.push_back(l.box);
        ignored.push_back(!(level_ok && range_ok));
        if (level_ok && range_ok) ++res.n_gt;
      }
      std::vector<Detection> frame_dets;
      if (auto it = dets.find(id); it != dets.end()) {
        for (const auto& d : it->second) {
          if (d.cls == cell.cls) frame_dets.push_back(d);
        }
      }
      std::stable_sort(frame_dets.begin(), frame_dets.end(),
                       [](const Detection& a, const Detection& b) { return a.score > b.score; });
      std::vector<Box3D> det_boxes;
      for (const auto& d : frame_dets) det_boxes.push_back(d.box);
      const auto ign = to_array(ignored);
      const MatchResult m =
          match_detections(det_boxes, gt_boxes, {ign.get(), ignored.size()}, iou, cell.iou_thresh);
      for (std::size_t i = 0; i < frame_dets.size(); ++i) {
        if (m.outcome[i] == Outcome::kIgnored) continue;
        const bool is_tp = m.outcome[i] == Outcome::kTruePositive;
        all.push_back({frame_dets[i].score, is_tp, !is_tp});
      }
    }
    std::stable_sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) { return a.score > b.score; });
    std::unique_ptr<bool[]> tp(new bool[all.size()]);
    std::unique_ptr<bool[]> fp(new bool[all.size()]);
    for (std::size_t i = 0; i < all.size(); ++i) {
      tp[i] = all[i].tp;
      fp[i] = all[i].fp;
      res.tp += all[i].tp;
      res.fp += all[i].fp;
    }
    res.ap = average_precision({tp.get(), all.size()}, {fp.get(), all.size()}, res.n_gt, mode);
    res.curve = pr_curve({tp.get(), all.size()}, {fp.get(), all.size()}, res.n_gt);
    results.push_back(res);
  }
  return results;
}

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string range_str(const RangeBucket& r) {
  return fmt("%g", r.min) + "-" + (std::isinf(r.max) ? std::string("inf") : fmt("%g", r.max));
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

std::string cell_key(const EvalCell& c) {
  return std::string(c.metric == Metric::k3D ? "3d" : "bev") + "." + lower(kitti::class_name(c.cls)) + "." +
         lower(kitti::difficulty_name(c.difficulty)) + ".iou" + fmt("%.2f", c.iou_thresh) + ".range" +
         range_str(c.range);
}

std::string format_report(std::span<const EvalResult> results) {
  std::string out = "metric  class       difficulty  iou   range      n_gt   tp     fp     AP\n";
  for (const auto& r : results) {
    char line[256];
    std::snprintf(line, sizeof line, "%-7s %-11s %-11s %.2f  %-10s %-6zu %-6zu %-6zu %.6f\n",
                  r.cell.metric == Metric::k3D ? "3D" : "BEV", std::string(kitti::class_name(r.cell.cls)).c_str(),
                  std::string(kitti::difficulty_name(r.cell.difficulty)).c_str(), r.cell.iou_thresh,
                  range_str(r.cell.range).c_str(), r.n_gt, r.tp, r.fp, r.ap);
    out += line;
  }
  return out;
}

std::string format_kv(std::span<const EvalResult> results) {
  std::string out;
  for (const auto& r : results) {
    const std::string k = cell_key(r.cell);
    out += "ap." + k + " = " + fmt("%.6f", r.ap) + "\n";
    out += "n_gt." + k + " = " + std::to_string(r.n_gt) + "\n";
    out += "tp." + k + " = " + std::to_string(r.tp) + "\n";
    out += "fp." + k + " = " + std::to_string(r.fp) + "\n";
  }
  return out;
}

}  // namespace fastpoint::eval
