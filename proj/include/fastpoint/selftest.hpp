// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

/// \file
/// Oracle battery shared by `fastpoint selftest` and the acceptance binary.
/// Each check compares library results against an independent computation
/// and reports the worst deviation it saw.

#pragma once

#include <string>
#include <vector>

namespace fastpoint::selftest {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

/// iou_bev against a 1e6-sample Monte-Carlo estimate on 200 rotated pairs,
/// tolerance 5e-3, under 60 s.
CheckResult geometry_oracle();

/// decode(encode(.)) for both box parameterizations on 1000 random pairs
/// each, tolerance 1e-9.
CheckResult roundtrips();

/// The one-positive one-negative classification case and smooth-L1
/// continuity at the transition, tolerance 1e-12.
CheckResult loss_values();

/// Central differences (step 1e-5) against backward for every op with
/// gradients and every loss, 100 random instances each, relative error
/// at most 1e-4.
CheckResult gradient_suite();

/// Reference-width static shapes for a (704, 800, 20) grid plus a real
/// forward pass at that resolution with minimal widths.
CheckResult shape_contract();

/// NMS against brute-force greedy selection, the R11 hand case and a
/// three-frame evaluation against a hand-built PR curve.
CheckResult nms_ap_oracles();

/// 1000 seeded augmented scenes: no overlapping gt pair and exact
/// interior point counts under global transforms.
CheckResult augmentation_audit();

std::vector<CheckResult> run_all();

}  // namespace fastpoint::selftest
