// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

/// \file
/// Training-time augmentation: global flip/scale/rotation, per-object
/// perturbation with collision rejection, and ground-truth database
/// sampling (pasting objects with their surrounding context).
///
/// GtDatabase container (little-endian):
///   char[4] "FPGD", u32 version (1), f64 margin, u64 entry count
///   per entry: u32 class, f64[7] box (x y z l w h theta),
///              u32 id length + id bytes, u64 point count, f64[4] per point

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fastpoint/scene.hpp"

namespace fastpoint {

struct GlobalAugmentParams {
  double flip_prob = 0.5;
  double scale_min = 0.95;
  double scale_max = 1.05;
  double rotation_max = kPi / 4.0;  ///< uniform in [-max, max]
};

struct GlobalSample {
  bool flip = false;
  double scale = 1.0;
  double rotation = 0.0;
};

/// Applies y-flip (y -> -y, theta -> -theta), then scaling about the origin,
/// then rotation about +z. Boxes rotate their heading with the scene.
Scene apply_global(const Scene& scene, const GlobalSample& sample);
GlobalSample sample_global(const GlobalAugmentParams& params, std::uint64_t seed);
Scene global_augment(const Scene& scene, std::uint64_t seed, const GlobalAugmentParams& params = {});

struct PerturbParams {
  double sigma_xy = 1.0;
  double sigma_z = 0.3;
  double rotation_max = 18.0 * kPi / 180.0;
  int max_tries = 10;
};

struct ObjectMove {
  double dx = 0.0, dy = 0.0, dz = 0.0, dtheta = 0.0;
};

struct PerturbTrace {
  /// Proposals drawn per gt (1 when the first proposal fit).
  std::vector<int> tries;
  std::vector<bool> skipped;
  std::size_t rejections = 0;
};

/// Moves each gt by one sampled rigid motion at a time, in gt order. A move is
/// rejected when the moved box has BEV IoU > 0 with any other current box;
/// after max_tries rejections the gt stays put. Interior points move with
/// their box; background points inside the moved box are removed.
Scene perturb_objects(const Scene& scene, std::uint64_t seed, const PerturbParams& params = {},
                      PerturbTrace* trace = nullptr);

/// Same procedure with caller-supplied candidate moves: gt i tries
/// moves[i][0], moves[i][1], ... in order.
Scene perturb_objects_with(const Scene& scene, std::span<const std::vector<ObjectMove>> moves,
                           PerturbTrace* trace = nullptr);

struct GtEntry {
  kitti::ObjectClass cls = kitti::ObjectClass::kCar;
  Box3D box;
  PointCloud points;  ///< inside box grown by the context margin
  std::string frame_id;
};

struct GtDatabase {
  double margin = 0.3;
  std::vector<GtEntry> entries;
};

/// One entry per non-DontCare gt with at least min_points interior points.
GtDatabase build_gt_database(std::span<const Scene> frames, double margin = 0.3, std::size_t min_points = 5);

struct MixupTrace {
  std::vector<std::size_t> placed;   ///< database indices pasted
  std::vector<std::size_t> skipped;  ///< database indices rejected by collision
  std::size_t removed_points = 0;
};

/// Draws min(n_objects, db size) distinct entries in seeded random order and
/// pastes each at its stored pose unless its context box (box grown by the
/// database margin in the plane) has BEV IoU > 0 with any current box. Base
/// points inside the context box are removed before the entry's points are
/// appended.
Scene mixup_sample(const Scene& scene, const GtDatabase& db, std::size_t n_objects, std::uint64_t seed,
                   MixupTrace* trace = nullptr);

std::vector<std::uint8_t> encode_gt_database(const GtDatabase& db);
GtDatabase decode_gt_database(std::span<const std::uint8_t> bytes);
void write_gt_database(const std::filesystem::path& path, const GtDatabase& db);
GtDatabase read_gt_database(const std::filesystem::path& path);

struct AugmentConfig {
  bool mixup = true;
  std::size_t mixup_objects = 20;
  bool global = true;
  GlobalAugmentParams global_params;
  bool perturb = true;
  PerturbParams perturb_params;
};

/// mixup -> global -> perturb, each stage seeded from `seed`.
Scene augment_scene(const Scene& scene, const GtDatabase* db, const AugmentConfig& cfg, std::uint64_t seed);

}  // namespace fastpoint
