// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "fastpoint/error.hpp"
#include "fastpoint/evalkit.hpp"

namespace fastpoint::eval {
namespace {

kitti::FrameLabel car(const Box3D& b, kitti::Difficulty d = kitti::Difficulty::kEasy) {
  kitti::FrameLabel l;
  l.cls = kitti::ObjectClass::kCar;
  l.type_name = "Car";
  l.box = b;
  l.difficulty = d;
  return l;
}

TEST(AveragePrecision, PerfectAndEmptyCases) {
  const bool tp[] = {true, true}, fp[] = {false, false};
  EXPECT_DOUBLE_EQ(average_precision(tp, fp, 2, ApMode::kR11), 1.0);
  EXPECT_DOUBLE_EQ(average_precision(tp, fp, 2, ApMode::kR40), 1.0);
  EXPECT_EQ(average_precision(tp, fp, 0, ApMode::kR11), 0.0);
  EXPECT_EQ(average_precision({}, {}, 3, ApMode::kR11), 0.0);
}

TEST(AveragePrecision, HalfRecallAtFullPrecision) {
  // One of two gts found first, then a false positive: precision 1 up to recall 0.5.
  const bool tp[] = {true, false}, fp[] = {false, true};
  EXPECT_DOUBLE_EQ(average_precision(tp, fp, 2, ApMode::kR11), 6.0 / 11.0);
  EXPECT_DOUBLE_EQ(average_precision(tp, fp, 2, ApMode::kR40), 20.0 / 40.0);
}

TEST(PrCurve, SkipsUncountedDetections) {
  const bool tp[] = {true, false, false}, fp[] = {false, false, true};
  const auto c = pr_curve(tp, fp, 2);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_DOUBLE_EQ(c[1].precision, 0.5);
  EXPECT_DOUBLE_EQ(c[1].recall, 0.5);
}

// Greedy matching written out over an explicit IoU table.
std::vector<Outcome> oracle_match(const std::vector<std::vector<double>>& iou, const std::vector<bool>& ignored,
                                  double thresh) {
  std::vector<bool> taken(ignored.size(), false);
  std::vector<Outcome> out;
  for (const auto& row : iou) {
    long best = -1;
    for (std::size_t g = 0; g < row.size(); ++g) {
      if (ignored[g] || taken[g] || row[g] < thresh) continue;
      if (best < 0 || row[g] > row[static_cast<std::size_t>(best)]) best = static_cast<long>(g);
    }
    if (best >= 0) {
      taken[static_cast<std::size_t>(best)] = true;
      out.push_back(Outcome::kTruePositive);
      continue;
    }
    bool hits_ignored = false;
    for (std::size_t g = 0; g < row.size(); ++g) hits_ignored = hits_ignored || (ignored[g] && row[g] >= thresh);
    out.push_back(hits_ignored ? Outcome::kIgnored : Outcome::kFalsePositive);
  }
  return out;
}

TEST(MatchDetections, FiveDetectionsThreeGtsAgainstOracle) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-1.5, 1.5), a(-kPi, kPi);
  const IouFn iou = iou_bev_boxes;
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<Box3D> gts, dets;
    for (int g = 0; g < 3; ++g) gts.push_back({u(rng), u(rng), 0, 3.9, 1.6, 1.5, a(rng)});
    for (int d = 0; d < 5; ++d) {
      const Box3D& near = gts[static_cast<std::size_t>(d % 3)];
      dets.push_back({near.x + 0.3 * u(rng), near.y + 0.3 * u(rng), 0, 3.9, 1.6, 1.5, near.theta + 0.1 * u(rng)});
    }
    std::vector<bool> ignored{trial % 3 == 0, false, trial % 5 == 0};
    std::vector<std::vector<double>> table(5, std::vector<double>(3));
    for (int d = 0; d < 5; ++d)
      for (int g = 0; g < 3; ++g) table[d][g] = iou(dets[d], gts[g]);
    const auto want = oracle_match(table, ignored, 0.5);
    const auto flags = std::make_unique<bool[]>(3);
    for (int g = 0; g < 3; ++g) flags[g] = ignored[g];
    const MatchResult got = match_detections(dets, gts, std::span<const bool>(flags.get(), 3), iou, 0.5);
    ASSERT_EQ(got.outcome, want) << "trial " << trial;
    std::vector<long> used;
    for (long m : got.matched_gt)
      if (m >= 0) used.push_back(m);
    std::sort(used.begin(), used.end());
    EXPECT_EQ(std::adjacent_find(used.begin(), used.end()), used.end());
  }
}

TEST(Evaluate, DetectionsEqualToGtsScorePerfectly) {
  LabelsById gts;
  DetectionsById dets;
  gts["a"] = {car({10, 0, -1, 4, 1.7, 1.5, 0.2}), car({20, 4, -1, 4, 1.7, 1.5, -1}, kitti::Difficulty::kModerate)};
  gts["b"] = {car({15, -3, -1, 3.9, 1.6, 1.5, 1.0})};
  for (const auto& [id, labels] : gts) {
    for (const auto& l : labels) dets[id].push_back({l.box, 0.9});
  }
  const std::vector<EvalCell> cells{{Metric::k3D, 0.7, kitti::Difficulty::kModerate, {}, kitti::ObjectClass::kCar},
                                    {Metric::kBev, 0.5, kitti::Difficulty::kHard, {}, kitti::ObjectClass::kCar}};
  for (const auto& r : evaluate(dets, gts, cells)) {
    EXPECT_DOUBLE_EQ(r.ap, 1.0);
    EXPECT_EQ(r.n_gt, 3u);
    EXPECT_EQ(r.fp, 0u);
  }
}

TEST(Evaluate, EasyCellIgnoresHarderGtsAndRangeBuckets) {
  LabelsById gts;
  DetectionsById dets;
  gts["a"] = {car({10, 0, -1, 4, 1.7, 1.5, 0}), car({40, 0, -1, 4, 1.7, 1.5, 0}, kitti::Difficulty::kHard)};
  dets["a"] = {{gts["a"][0].box, 0.8}, {gts["a"][1].box, 0.9}};
  const std::vector<EvalCell> easy{{Metric::k3D, 0.7, kitti::Difficulty::kEasy, {}, kitti::ObjectClass::kCar}};
  const auto r = evaluate(dets, gts, easy);
  EXPECT_EQ(r[0].n_gt, 1u);
  EXPECT_EQ(r[0].fp, 0u);
  EXPECT_DOUBLE_EQ(r[0].ap, 1.0);
  const std::vector<EvalCell> near{{Metric::k3D, 0.7, kitti::Difficulty::kHard, {0, 30}, kitti::ObjectClass::kCar}};
  EXPECT_EQ(evaluate(dets, gts, near)[0].n_gt, 1u);
}

TEST(Evaluate, DetectionsWithoutLabelsAreAnError) {
  DetectionsById dets;
  dets["zzz"] = {{{1, 1, 1, 4, 2, 1.5, 0}, 0.5}};
  const std::vector<EvalCell> cells{EvalCell{}};
  EXPECT_THROW(evaluate(dets, {}, cells), MissingFrame);
}

TEST(Report, KeysAndTable) {
  const EvalCell c{Metric::kBev, 0.5, kitti::Difficulty::kHard, {0, 30}, kitti::ObjectClass::kCar};
  EXPECT_EQ(cell_key(c), "bev.car.hard.iou0.50.range0-30");
  EXPECT_EQ(cell_key(EvalCell{}), "3d.car.moderate.iou0.70.range0-inf");
  const std::vector<EvalResult> rs{{c, 0.5, 2, 1, 1, {}}};
  const std::string kv = format_kv(rs);
  EXPECT_NE(kv.find("ap.bev.car.hard.iou0.50.range0-30 = "), std::string::npos);
  EXPECT_NE(kv.find("n_gt.bev.car.hard.iou0.50.range0-30 = 2"), std::string::npos);
  EXPECT_FALSE(format_report(rs).empty());
}

}  // namespace
}  // namespace fastpoint::eval
