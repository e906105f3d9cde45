// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

/// \file
/// The CLI subcommands as library calls. Each writes its products under
/// `out` and returns a process exit code.
///
/// Output layout:
///   ingest     dataset/ (KITTI layout), ingest.txt
///   voxelize   voxels/<id>.fpvx, voxelize.txt
///   targets    targets/<id>.txt, targets.txt
///   train-toy  checkpoint.fpck, train_log.txt, config.yaml
///   infer      detections/<id>.txt, timings.txt
///   eval       metrics.txt (key-value), report.txt
///   augment    augmented/ (KITTI layout), gt_database.fpgd
///   selftest   selftest.txt

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>

#include "fastpoint/pipeline/config.hpp"

namespace fastpoint::pipeline {

struct CommandOptions {
  PipelineConfig config;
  std::filesystem::path out = "out";
  /// Messages for the user; progress lines go here too.
  std::ostream* log = nullptr;
  /// infer: checkpoint path (default out/checkpoint.fpck).
  std::optional<std::filesystem::path> checkpoint;
  /// infer: emit first-stage boxes without refinement.
  bool skip_refiner = false;
  /// eval: directory of detection files (default out/detections).
  std::optional<std::filesystem::path> detections;
};

int cmd_ingest(const CommandOptions& opt);
int cmd_voxelize(const CommandOptions& opt);
int cmd_targets(const CommandOptions& opt);
int cmd_train_toy(const CommandOptions& opt);
int cmd_infer(const CommandOptions& opt);
int cmd_eval(const CommandOptions& opt);
int cmd_augment(const CommandOptions& opt);
int cmd_selftest(const CommandOptions& opt);

}  // namespace fastpoint::pipeline
