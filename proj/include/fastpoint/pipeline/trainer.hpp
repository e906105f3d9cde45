// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

/// \file
/// Two-phase training: VoxelRPN alone, then RefinerNet on the frozen
/// first stage, one frame per step in both phases.

#pragma once

#include <cstddef>
#include <ostream>
#include <string>
#include <vector>

#include "fastpoint/pipeline/model.hpp"
#include "fastpoint/scene.hpp"

namespace fastpoint::pipeline {

struct EpochStats {
  std::string phase;  ///< "rpn" or "refiner"
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;  ///< mean over the epoch's steps
  double cls = 0.0;
  double reg = 0.0;
  std::size_t samples = 0;  ///< positives (rpn) or proposals (refiner)
};

struct TrainLog {
  std::vector<EpochStats> epochs;
  std::string to_kv() const;
};

/// Refiner samples of one frame: first-stage proposals whose best BEV IoU
/// with a gt exceeds proposal_iou, in score order, at most max_proposals.
struct RefinerSamples {
  std::vector<BoxFeature> features;
  std::vector<CornerTarget> targets;
  std::vector<std::size_t> gt_index;
};

RefinerSamples refiner_samples(Model& model, const Scene& scene, std::uint64_t seed);

/// Trains `model` in place. Throws DivergedLoss on a non-finite loss.
/// `progress`, when set, receives one line per epoch.
TrainLog train_rpn(Model& model, const std::vector<Scene>& scenes, std::ostream* progress = nullptr);
TrainLog train_refiner(Model& model, const std::vector<Scene>& scenes, std::ostream* progress = nullptr);
TrainLog train_two_phase(Model& model, const std::vector<Scene>& scenes, std::ostream* progress = nullptr);

}  // namespace fastpoint::pipeline
