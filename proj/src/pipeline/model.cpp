// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastpoint/pipeline/model.hpp"

#include <chrono>

#include "fastpoint/error.hpp"
#include "fastpoint/kitti.hpp"
#include "fastpoint/rng.hpp"

namespace fastpoint::pipeline {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

}  // namespace

std::uint64_t frame_seed(std::uint64_t seed, std::string_view id) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : id) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return derive_seed(seed, h);
}

BoxFeature cap_points(const BoxFeature& f, std::size_t cap) {
  if (cap == 0 || f.size() <= cap) return f;
  BoxFeature out;
  out.proposal = f.proposal;
  out.score = f.score;
  out.channels = f.channels;
  out.coords.reserve(cap);
  out.features.reserve(cap * f.channels);
  for (std::size_t k = 0; k < cap; ++k) {
    const std::size_t i = k * f.size() / cap;
    out.coords.push_back(f.coords[i]);
    out.features.insert(out.features.end(), f.features.begin() + static_cast<std::ptrdiff_t>(i * f.channels),
                        f.features.begin() + static_cast<std::ptrdiff_t>((i + 1) * f.channels));
  }
  return out;
}

Model::Model(const PipelineConfig& cfg)
    : cfg_(cfg),
      rpn_(cfg.net, cfg.voxel.dims(), derive_seed(cfg.seed, 11)),
      refiner_(cfg.refiner, derive_seed(cfg.seed, 12)) {
  cfg_.validate();
  anchors_ = build_anchor_grid(rpn_.plan().map_rows(), rpn_.plan().map_cols(), cfg.anchors, cfg.voxel);
}

nn::Parameters Model::parameters() const {
  nn::Parameters all;
  for (const nn::Parameters* p : {&rpn_.params(), &refiner_.params()}) {
    for (const auto& e : p->entries()) {
      nn::Tensor& t = all.add(e.name, e.tensor.shape(), std::vector<double>(e.tensor.numel()), e.kind);
      t = e.tensor;
    }
  }
  return all;
}

void Model::load(const nn::Parameters& checkpoint) {
  nn::assign_from(rpn_.params(), checkpoint);
  nn::assign_from(refiner_.params(), checkpoint);
}

RpnFrame Model::propose(std::span<const Point> points, std::uint64_t seed, StageTimings* timings) {
  RpnFrame f;
  auto t0 = Clock::now();
  f.points = kitti::crop_to_range(points, cfg_.voxel.range);
  const VoxelGrid grid = voxelize(f.points, cfg_.voxel, seed);
  if (timings) timings->voxelize_ms = ms_since(t0);

  t0 = Clock::now();
  nn::NoGradGuard no_grad;
  const nn::RpnOutput out = rpn_.forward(grid, nn::NormMode::kEval);
  if (timings) timings->rpn_ms = ms_since(t0);

  t0 = Clock::now();
  const auto dets = decode_detections(out.cls, out.reg, anchors_, cfg_.post.score_thresh);
  f.proposals = select_detections(dets, cfg_.post.nms_iou, cfg_.post.top_k);
  f.features = feature_map_from_tensor(out.fused);
  if (timings) timings->proposals_ms = ms_since(t0);
  return f;
}

std::optional<BoxFeature> Model::box_feature(const RpnFrame& frame, const Detection& proposal) const {
  try {
    return cap_points(build_box_feature(frame.points, frame.features, cfg_.voxel.range, proposal.box, proposal.score,
                                        cfg_.refiner_train.margin, cfg_.refiner_train.margin_mode),
                      cfg_.refiner_train.max_points);
  } catch (const EmptyProposal&) {
    return std::nullopt;
  }
}

FrameOutput Model::detect(std::span<const Point> points, std::uint64_t seed, bool skip_refiner) {
  FrameOutput out;
  const auto t_all = Clock::now();
  RpnFrame frame = propose(points, seed, &out.timings);
  out.proposals = frame.proposals;
  out.detections = frame.proposals;
  if (!skip_refiner && !frame.proposals.empty()) {
    const auto t0 = Clock::now();
    std::vector<BoxFeature> feats;
    std::vector<std::size_t> which;
    for (std::size_t i = 0; i < frame.proposals.size(); ++i) {
      if (auto f = box_feature(frame, frame.proposals[i])) {
        feats.push_back(std::move(*f));
        which.push_back(i);
      }
    }
    if (!feats.empty()) {
      nn::NoGradGuard no_grad;
      const nn::Tensor pred = refiner_.forward(feats);
      const auto v = pred.values();
      const std::size_t stride = pred.dim(1);
      for (std::size_t k = 0; k < which.size(); ++k) {
        CornerTarget t;
        std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(k * stride), 24, t.begin());
        Detection& d = out.detections[which[k]];
        try {
          d.box = corners_to_box(decode_corners(t, d.box));
        } catch (const DegenerateCorners&) {
          // keep the proposal box
        }
      }
    }
    out.timings.refine_ms = ms_since(t0);
  }
  out.timings.total_ms = ms_since(t_all);
  return out;
}

}  // namespace fastpoint::pipeline
