// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastpoint/pipeline/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "fastpoint/error.hpp"
#include "fastpoint/kitti.hpp"
#include "fastpoint/losses.hpp"
#include "fastpoint/nn/ops.hpp"
#include "fastpoint/nn/optim.hpp"
#include "fastpoint/rng.hpp"

namespace fastpoint::pipeline {

namespace {

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  return order;
}

void check_finite(double v, const std::string& where) {
  if (!std::isfinite(v)) throw DivergedLoss("non-finite loss in " + where);
}

void report(std::ostream* out, const EpochStats& s) {
  if (!out) return;
  char line[160];
  std::snprintf(line, sizeof line, "%s epoch %zu lr %.2e loss %.6f cls %.6f reg %.6f samples %zu\n", s.phase.c_str(),
                s.epoch, s.lr, s.loss, s.cls, s.reg, s.samples);
  *out << line << std::flush;
}

// Boxes whose BEV center lies in the voxel range.
std::vector<Box3D> in_range_boxes(const Scene& s, const CropRange& range) {
  std::vector<Box3D> out;
  for (const Box3D& b : s.boxes) {
    if (range.x.contains(b.x) && range.y.contains(b.y)) out.push_back(b);
  }
  return out;
}

}  // namespace

std::string TrainLog::to_kv() const {
  std::string out;
  char buf[96];
  for (const auto& e : epochs) {
    const std::string k = e.phase + ".epoch" + std::to_string(e.epoch) + ".";
    std::snprintf(buf, sizeof buf, "%.9g", e.lr);
    out += k + "lr = " + buf + "\n";
    std::snprintf(buf, sizeof buf, "%.9g", e.loss);
    out += k + "loss = " + buf + "\n";
    std::snprintf(buf, sizeof buf, "%.9g", e.cls);
    out += k + "cls = " + buf + "\n";
    std::snprintf(buf, sizeof buf, "%.9g", e.reg);
    out += k + "reg = " + buf + "\n";
    out += k + "samples = " + std::to_string(e.samples) + "\n";
  }
  return out;
}

TrainLog train_rpn(Model& model, const std::vector<Scene>& scenes, std::ostream* progress) {
  const PipelineConfig& cfg = model.config();
  const Schedule& sched = cfg.rpn_schedule;
  nn::Adam adam({.lr = sched.lr, .weight_decay = sched.weight_decay});
  GtDatabase db;
  const bool use_db = cfg.augment_enabled && cfg.augment.mixup;
  if (use_db) db = build_gt_database(scenes);
  nn::Parameters& params = model.rpn().params();
  TrainLog log;
  for (std::size_t epoch = 0; epoch < sched.epochs; ++epoch) {
    EpochStats st{"rpn", epoch, sched.lr_at(epoch)};
    adam.set_lr(st.lr);
    const nn::NormMode mode =
        epoch + sched.frozen_norm_epochs >= sched.epochs ? nn::NormMode::kEval : nn::NormMode::kTrain;
    const auto order = epoch_order(scenes.size(), derive_seed(cfg.seed, 0x7A000000 + epoch));
    for (std::size_t step = 0; step < order.size(); ++step) {
      const std::uint64_t step_seed = derive_seed(cfg.seed, (epoch << 20) + step + 1);
      const Scene& base = scenes[order[step]];
      const Scene scene =
          cfg.augment_enabled ? augment_scene(base, use_db ? &db : nullptr, cfg.augment, step_seed) : base;
      const PointCloud points = kitti::crop_to_range(scene.points, cfg.voxel.range);
      const auto gts = in_range_boxes(scene, cfg.voxel.range);
      const VoxelGrid grid = voxelize(points, cfg.voxel, derive_seed(step_seed, 1));
      const nn::RpnOutput out = model.rpn().forward(grid, mode);
      const TargetAssignment ta = assign_targets(model.anchors(), gts, cfg.pos_iou, cfg.neg_iou);
      const auto negatives = ta.negative_anchors();
      const nn::Tensor cls = cls_loss_op(out.cls, ta.positive_anchors, negatives, cfg.loss);
      const nn::Tensor reg = reg_loss_op(out.reg, ta.positive_anchors, ta.positive_targets, cfg.loss.sigma);
      const nn::Tensor loss = nn::add(cls, reg);
      check_finite(loss.item(), "rpn epoch " + std::to_string(epoch));
      params.zero_grad();
      nn::backward(loss);
      adam.step(params);
      st.loss += loss.item();
      st.cls += cls.item();
      st.reg += reg.item();
      st.samples += ta.num_positive();
    }
    const double n = static_cast<double>(std::max<std::size_t>(order.size(), 1));
    st.loss /= n;
    st.cls /= n;
    st.reg /= n;
    report(progress, st);
    log.epochs.push_back(st);
  }
  return log;
}

RefinerSamples refiner_samples(Model& model, const Scene& scene, std::uint64_t seed) {
  const PipelineConfig& cfg = model.config();
  RefinerSamples out;
  const RpnFrame frame = model.propose(scene.points, seed);
  for (const Detection& p : frame.proposals) {
    if (out.features.size() >= cfg.refiner_train.max_proposals) break;
    double best = 0.0;
    std::size_t g_best = 0;
    for (std::size_t g = 0; g < scene.boxes.size(); ++g) {
      const double v = iou_bev(to_bev(p.box), to_bev(scene.boxes[g]));
      if (v > best) {
        best = v;
        g_best = g;
      }
    }
    if (!(best > cfg.refiner_train.proposal_iou)) continue;
    auto f = model.box_feature(frame, p);
    if (!f) continue;
    out.features.push_back(std::move(*f));
    out.targets.push_back(encode_corners(scene.boxes[g_best], p.box));
    out.gt_index.push_back(g_best);
  }
  return out;
}

TrainLog train_refiner(Model& model, const std::vector<Scene>& scenes, std::ostream* progress) {
  const PipelineConfig& cfg = model.config();
  const Schedule& sched = cfg.refiner_schedule;
  // The first stage is frozen, so its proposals and features are computed once.
  std::vector<RefinerSamples> cache;
  cache.reserve(scenes.size());
  for (const Scene& s : scenes) cache.push_back(refiner_samples(model, s, frame_seed(cfg.seed, s.id)));

  nn::Adam adam({.lr = sched.lr, .weight_decay = sched.weight_decay});
  nn::Parameters& params = model.refiner().params();
  TrainLog log;
  for (std::size_t epoch = 0; epoch < sched.epochs; ++epoch) {
    EpochStats st{"refiner", epoch, sched.lr_at(epoch)};
    adam.set_lr(st.lr);
    const auto order = epoch_order(scenes.size(), derive_seed(cfg.seed, 0x7B000000 + epoch));
    std::size_t steps = 0;
    for (std::size_t idx : order) {
      const RefinerSamples& s = cache[idx];
      if (s.features.empty()) continue;
      const nn::Tensor pred = model.refiner().forward(s.features);
      const nn::Tensor loss = corner_loss_op(pred, s.targets, cfg.loss.sigma);
      check_finite(loss.item(), "refiner epoch " + std::to_string(epoch));
      params.zero_grad();
      nn::backward(loss);
      adam.step(params);
      st.loss += loss.item();
      st.samples += s.features.size();
      ++steps;
    }
    if (steps) st.loss /= static_cast<double>(steps);
    st.reg = st.loss;
    report(progress, st);
    log.epochs.push_back(st);
  }
  return log;
}

TrainLog train_two_phase(Model& model, const std::vector<Scene>& scenes, std::ostream* progress) {
  TrainLog log = train_rpn(model, scenes, progress);
  TrainLog second = train_refiner(model, scenes, progress);
  log.epochs.insert(log.epochs.end(), second.epochs.begin(), second.epochs.end());
  return log;
}

}  // namespace fastpoint::pipeline
