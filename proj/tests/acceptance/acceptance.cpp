// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

// End-to-end acceptance run: one PASS/FAIL line per criterion, exit status 1
// when any criterion fails.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <string>
#include <vector>

#include "fastpoint/pipeline/commands.hpp"
#include "fastpoint/pipeline/config.hpp"
#include "fastpoint/pipeline/dataset.hpp"
#include "fastpoint/pipeline/model.hpp"
#include "fastpoint/selftest.hpp"

namespace fs = std::filesystem;
namespace fp = fastpoint::pipeline;
using fastpoint::selftest::CheckResult;

namespace {

constexpr double kRecallTarget = 0.95;
constexpr double kRefineGain = 0.02;
constexpr double kTrainBudgetSeconds = 30 * 60;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

struct ToyRun {
  double train_seconds = 0;
  std::size_t gts = 0;
  std::size_t recalled = 0;
  double rpn_iou = 0;
  double refined_iou = 0;
  std::size_t matched = 0;
};

// Scores the trained checkpoint on its own training scenes.
ToyRun score_toy(const fp::PipelineConfig& cfg, const fs::path& ckpt) {
  fp::Model model(cfg);
  model.load(fastpoint::nn::load_checkpoint(ckpt));
  ToyRun r;
  for (const fp::Frame& f : fp::load_frames(cfg)) {
    const fastpoint::Scene scene = fp::scene_from_frame(f, cfg.voxel.range);
    const fp::FrameOutput out = model.detect(f.points, fp::frame_seed(cfg.seed, f.id));
    for (const auto& gt : scene.boxes) {
      ++r.gts;
      double best = 0;
      long pick = -1;
      for (std::size_t k = 0; k < out.proposals.size(); ++k) {
        const double iou = fastpoint::iou_bev(fastpoint::to_bev(out.proposals[k].box), fastpoint::to_bev(gt));
        if (iou > best) {
          best = iou;
          pick = static_cast<long>(k);
        }
      }
      if (pick < 0 || best < 0.5) continue;
      ++r.recalled;
      const auto k = static_cast<std::size_t>(pick);
      r.rpn_iou += fastpoint::iou_3d(out.proposals[k].box, gt);
      r.refined_iou += fastpoint::iou_3d(out.detections[k].box, gt);
      ++r.matched;
    }
  }
  if (r.matched) {
    r.rpn_iou /= static_cast<double>(r.matched);
    r.refined_iou /= static_cast<double>(r.matched);
  }
  return r;
}

int train_and_infer(const fp::PipelineConfig& cfg, const fs::path& out, std::ostream* log) {
  fp::CommandOptions opt;
  opt.config = cfg;
  opt.out = out;
  opt.log = log;
  if (int rc = fp::cmd_train_toy(opt)) return rc;
  return fp::cmd_infer(opt);
}

bool same_dumps(const fs::path& a, const fs::path& b, std::string& detail) {
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(a / "detections")) {
    const fs::path other = b / "detections" / e.path().filename();
    if (!fs::exists(other) || slurp(e.path()) != slurp(other)) {
      detail = "dump differs: " + e.path().filename().string();
      return false;
    }
    ++files;
  }
  std::size_t other_files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(b / "detections")) ++other_files;
  if (files != other_files || files == 0) {
    detail = "dump file counts differ";
    return false;
  }
  if (slurp(a / "checkpoint.fpck") != slurp(b / "checkpoint.fpck")) {
    detail = "checkpoints differ";
    return false;
  }
  detail = std::to_string(files) + " dumps and the checkpoint byte-identical";
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fastpoint acceptance run"};
  std::string out = "acceptance_out";
  std::string config = FASTPOINT_SOURCE_DIR "/configs/toy.yaml";
  bool verbose = false;
  app.add_option("--out", out, "scratch directory")->capture_default_str();
  app.add_option("--config", config, "toy config")->capture_default_str();
  app.add_flag("--verbose", verbose, "stream training progress");
  CLI11_PARSE(app, argc, argv);

  const fs::path root = out;
  fs::remove_all(root);
  fs::create_directories(root);
  std::ofstream progress(root / "progress.log");
  std::ostream* log = verbose ? static_cast<std::ostream*>(&std::cout) : &progress;

  bool all = true;
  auto report = [&all](int id, const CheckResult& r) {
    std::printf("%s criterion %d: %s (%.1f s) %s\n", r.pass ? "PASS" : "FAIL", id, r.name.c_str(), r.seconds,
                r.detail.c_str());
    std::fflush(stdout);
    all = all && r.pass;
  };

  namespace st = fastpoint::selftest;
  report(1, st::geometry_oracle());
  report(2, st::roundtrips());
  report(3, st::loss_values());
  report(4, st::gradient_suite());
  report(5, st::shape_contract());
  report(6, st::nms_ap_oracles());

  const fp::PipelineConfig cfg = fp::load_config(config);
  {
    CheckResult r{"toy end-to-end: recall@top-30 and refinement gain", false, "", 0};
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const int rc = train_and_infer(cfg, root / "run_a", log);
      const double train_s = seconds_since(t0);
      const ToyRun t = score_toy(cfg, root / "run_a" / "checkpoint.fpck");
      const double recall = t.gts ? static_cast<double>(t.recalled) / static_cast<double>(t.gts) : 0.0;
      const double gain = t.refined_iou - t.rpn_iou;
      r.pass = rc == 0 && recall >= kRecallTarget && gain >= kRefineGain && train_s < kTrainBudgetSeconds;
      r.detail = fmt("recall %.3f over %.0f gts, mean 3D IoU %.3f -> %.3f", recall, static_cast<double>(t.gts),
                     t.rpn_iou, t.refined_iou) +
                 fmt(" (gain %.3f), train+infer %.0f s", gain, train_s);
    } catch (const std::exception& e) {
      r.detail = std::string("exception: ") + e.what();
    }
    r.seconds = seconds_since(t0);
    report(7, r);
  }
  {
    CheckResult r{"determinism: repeated train-toy + infer", false, "", 0};
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const int rc = train_and_infer(cfg, root / "run_b", log);
      r.pass = rc == 0 && same_dumps(root / "run_a", root / "run_b", r.detail);
    } catch (const std::exception& e) {
      r.detail = std::string("exception: ") + e.what();
    }
    r.seconds = seconds_since(t0);
    report(8, r);
  }
  report(9, st::augmentation_audit());

  std::printf("%s\n", all ? "ALL CRITERIA PASS" : "SOME CRITERIA FAILED");
  return all ? 0 : 1;
}
