// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "fastpoint/error.hpp"
#include "fastpoint/nn/parameters.hpp"
#include "fastpoint/pipeline/commands.hpp"
#include "fastpoint/pipeline/config.hpp"
#include "fastpoint/pipeline/dataset.hpp"
#include "fastpoint/pipeline/model.hpp"
#include "fastpoint/pipeline/trainer.hpp"

namespace fastpoint::pipeline {
namespace {

namespace fs = std::filesystem;

const fs::path kToy = fs::path(FASTPOINT_SOURCE_DIR) / "configs" / "toy.yaml";

PipelineConfig small_config(std::size_t scenes = 2) {
  PipelineConfig c = load_config(kToy);
  c.synthetic.scenes = scenes;
  c.rpn_schedule.epochs = 2;
  c.rpn_schedule.lr_steps = {};
  c.rpn_schedule.frozen_norm_epochs = 1;
  c.refiner_schedule.epochs = 2;
  c.refiner_schedule.lr_steps = {};
  return c;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("fastpoint_pipeline_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

TEST(Config, ToyAndReferenceFilesLoad) {
  EXPECT_NO_THROW(load_config(kToy).validate());
  const PipelineConfig ref = load_config(fs::path(FASTPOINT_SOURCE_DIR) / "configs" / "reference.yaml");
  EXPECT_EQ(ref.voxel.dims(), (std::array<std::size_t, 3>{704, 800, 20}));
  EXPECT_EQ(ref.rpn_schedule.epochs, 70u);
  EXPECT_EQ(ref.rpn_schedule.lr_steps, (std::vector<std::size_t>{50, 65}));
  EXPECT_DOUBLE_EQ(ref.rpn_schedule.lr, 0.01);
  EXPECT_EQ(ref.plan().map_rows(), 200u);
  EXPECT_EQ(ref.refiner.feature_channels, ref.plan().fused_channels());
}

TEST(Config, UnknownKeysAndBadValuesAreRejected) {
  EXPECT_THROW(parse_config("voxel:\n  sise: [0.1, 0.1, 0.2]\n"), ConfigMismatch);
  EXPECT_THROW(parse_config("refiner:\n  attention: sideways\n"), ConfigMismatch);
  EXPECT_THROW(parse_config("targets:\n  pos_iou: 0.3\n  neg_iou: 0.5\n"), ConfigMismatch);
}

TEST(Config, RejectsStrideMismatchBeforeRunning) {
  // 66 columns of voxels cannot be tiled by a stride-4 feature map.
  EXPECT_THROW(parse_config("voxel:\n  range:\n    x: [0.0, 6.6]\n"), ConfigMismatch);
  PipelineConfig c = load_config(kToy);
  c.refiner.feature_channels += 1;
  EXPECT_THROW(c.validate(), ConfigMismatch);
  c = load_config(kToy);
  c.net.anchors_per_cell = 2;
  EXPECT_THROW(c.validate(), ConfigMismatch);
}

TEST(Config, DumpParsesBackToTheSameConfig) {
  const PipelineConfig c = load_config(kToy);
  const std::string text = dump_config(c);
  EXPECT_EQ(dump_config(parse_config(text)), text);
}

TEST(Schedule, StepDecay) {
  Schedule s;
  EXPECT_DOUBLE_EQ(s.lr_at(0), 0.01);
  EXPECT_NEAR(s.lr_at(50), 0.001, 1e-15);
  EXPECT_NEAR(s.lr_at(69), 0.0001, 1e-15);
}

TEST(Synthetic, ScenesMeetPointFloorAndAreSeeded) {
  const PipelineConfig c = small_config(5);
  const auto a = generate_scenes(c), b = generate_scenes(c);
  ASSERT_EQ(a.size(), 5u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].points, b[i].points);
    EXPECT_GE(a[i].boxes.size(), c.synthetic.min_objects);
    EXPECT_LE(a[i].boxes.size(), c.synthetic.max_objects);
    for (const auto& box : a[i].boxes) EXPECT_GE(count_points_in_box(a[i].points, box), c.synthetic.min_points);
    for (std::size_t j = 0; j < a[i].boxes.size(); ++j)
      for (std::size_t k = j + 1; k < a[i].boxes.size(); ++k)
        EXPECT_EQ(iou_bev(to_bev(a[i].boxes[j]), to_bev(a[i].boxes[k])), 0.0);
  }
}

TEST(Dataset, FramesRoundTripThroughKittiLayout) {
  const PipelineConfig c = small_config(2);
  const auto frames = load_frames(c);
  const fs::path root = scratch("layout");
  std::vector<std::string> ids;
  for (const auto& f : frames) {
    write_frame(root, f);
    ids.push_back(f.id);
  }
  write_split(root, "train", ids);
  PipelineConfig disk = c;
  disk.dataset_root = root;
  const auto back = load_frames(disk);
  ASSERT_EQ(back.size(), frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    EXPECT_EQ(back[i].id, frames[i].id);
    EXPECT_EQ(back[i].points.size(), frames[i].points.size());
    ASSERT_EQ(back[i].labels.size(), frames[i].labels.size());
    EXPECT_NEAR(back[i].labels[0].box.x, frames[i].labels[0].box.x, 1e-5);
  }
  EXPECT_THROW(read_frame(root, "999999"), MissingFrame);
}

class TrainedModel : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    cfg_ = new PipelineConfig(small_config(2));
    scenes_ = new std::vector<Scene>(generate_scenes(*cfg_));
    model_ = new Model(*cfg_);
    train_rpn(*model_, *scenes_);
    after_rpn_ = new std::vector<std::uint8_t>(nn::serialize(model_->rpn().params()));
    train_refiner(*model_, *scenes_);
  }
  static void TearDownTestSuite() {
    delete model_;
    delete scenes_;
    delete cfg_;
    delete after_rpn_;
  }
  static PipelineConfig* cfg_;
  static std::vector<Scene>* scenes_;
  static Model* model_;
  static std::vector<std::uint8_t>* after_rpn_;
};

PipelineConfig* TrainedModel::cfg_ = nullptr;
std::vector<Scene>* TrainedModel::scenes_ = nullptr;
Model* TrainedModel::model_ = nullptr;
std::vector<std::uint8_t>* TrainedModel::after_rpn_ = nullptr;

TEST_F(TrainedModel, RefinerPhaseLeavesFirstStageUntouched) {
  EXPECT_EQ(nn::serialize(model_->rpn().params()), *after_rpn_);
}

TEST_F(TrainedModel, SameSeedSameCheckpoint) {
  Model again(*cfg_);
  train_two_phase(again, *scenes_);
  EXPECT_EQ(nn::serialize(again.parameters()), nn::serialize(model_->parameters()));
}

TEST_F(TrainedModel, EmptyCloudGivesNoDetections) {
  const FrameOutput out = model_->detect({}, 1);
  EXPECT_TRUE(out.detections.empty());
  EXPECT_TRUE(out.proposals.empty());
}

TEST_F(TrainedModel, SkipRefinerReturnsProposals) {
  // A zero score threshold guarantees proposals from a barely trained net.
  PipelineConfig open = *cfg_;
  open.post.score_thresh = 0.0;
  Model m(open);
  m.load(model_->parameters());
  const auto& pts = (*scenes_)[0].points;
  const FrameOutput out = m.detect(pts, 3, true);
  ASSERT_FALSE(out.proposals.empty());
  EXPECT_LE(out.proposals.size(), open.post.top_k);
  ASSERT_EQ(out.detections.size(), out.proposals.size());
  for (std::size_t i = 0; i < out.detections.size(); ++i) EXPECT_EQ(out.detections[i].box, out.proposals[i].box);
  const FrameOutput refined = m.detect(pts, 3, false);
  ASSERT_EQ(refined.proposals.size(), out.proposals.size());
  std::size_t moved = 0;
  for (std::size_t i = 0; i < refined.detections.size(); ++i) {
    EXPECT_EQ(refined.proposals[i].box, out.proposals[i].box);
    EXPECT_EQ(refined.detections[i].score, refined.proposals[i].score);
    moved += refined.detections[i].box != refined.proposals[i].box;
  }
  EXPECT_GT(moved, 0u);
}

TEST_F(TrainedModel, CheckpointLoadsIntoAFreshModel) {
  Model other(*cfg_);
  other.load(model_->parameters());
  const auto& pts = (*scenes_)[1].points;
  const FrameOutput a = model_->detect(pts, 5), b = other.detect(pts, 5);
  ASSERT_EQ(a.detections.size(), b.detections.size());
  for (std::size_t i = 0; i < a.detections.size(); ++i) EXPECT_EQ(a.detections[i].box, b.detections[i].box);
}

TEST(Training, SingleFrameOverfitDrivesLossDown) {
  PipelineConfig c = small_config(1);
  c.rpn_schedule.epochs = 40;
  c.rpn_schedule.lr = 0.003;
  c.rpn_schedule.frozen_norm_epochs = 0;
  const auto scenes = generate_scenes(c);
  Model m(c);
  const TrainLog log = train_rpn(m, scenes);
  ASSERT_EQ(log.epochs.size(), 40u);
  const double first = log.epochs.front().loss;
  EXPECT_LT(log.epochs.back().loss, 0.1 * first);
  // Each step sees a fresh voxel subsample, so single epochs jitter; means
  // over consecutive 5-epoch windows after warmup must fall strictly.
  constexpr std::size_t kWarmup = 5, kWindow = 5;
  double previous = log.epochs[kWarmup - 1].loss;
  for (std::size_t w = kWarmup; w + kWindow <= log.epochs.size(); w += kWindow) {
    double mean = 0;
    for (std::size_t e = w; e < w + kWindow; ++e) mean += log.epochs[e].loss / kWindow;
    EXPECT_LT(mean, previous) << "window starting at epoch " << w;
    previous = mean;
  }
  for (const auto& e : log.epochs) EXPECT_TRUE(std::isfinite(e.loss));
}

TEST(Commands, InferWithoutCheckpointFails) {
  CommandOptions opt;
  opt.config = small_config(1);
  opt.out = scratch("nockpt");
  EXPECT_THROW(cmd_infer(opt), MissingCheckpoint);
}

TEST(Commands, EvalOnGroundTruthDumpsScoresOne) {
  CommandOptions opt;
  opt.config = small_config(3);
  opt.out = scratch("evalgt");
  const auto frames = load_frames(opt.config);
  fs::create_directories(opt.out / "detections");
  for (const auto& f : frames) {
    std::vector<Detection> dets;
    for (const auto& l : f.labels) dets.push_back({l.box, 0.9});
    std::ofstream(opt.out / "detections" / (f.id + ".txt")) << format_detections(dets, f.calib);
  }
  ASSERT_EQ(cmd_eval(opt), 0);
  std::istringstream kv(slurp(opt.out / "metrics.txt"));
  std::map<std::string, double> m;
  std::string key, eq;
  double v;
  while (kv >> key >> eq >> v) m[key] = v;
  std::size_t checked = 0;
  for (const auto& [k, val] : m) {
    if (k.rfind("ap.", 0) != 0) continue;
    if (m.at("n_gt." + k.substr(3)) == 0) continue;
    EXPECT_DOUBLE_EQ(val, 1.0) << k;
    ++checked;
  }
  EXPECT_GT(checked, 0u);
  std::ofstream(opt.out / "detections" / "424242.txt") << "";
  EXPECT_THROW(cmd_eval(opt), MissingFrame);
}

TEST(Commands, AugmentIsByteIdenticalAcrossRuns) {
  PipelineConfig c = small_config(3);
  c.seed = 7;
  CommandOptions a;
  a.config = c;
  CommandOptions b;
  b.config = c;
  a.out = scratch("aug_a");
  b.out = scratch("aug_b");
  ASSERT_EQ(cmd_augment(a), 0);
  ASSERT_EQ(cmd_augment(b), 0);
  EXPECT_EQ(slurp(a.out / "gt_database.fpgd"), slurp(b.out / "gt_database.fpgd"));
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a.out / "augmented")) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), a.out);
    EXPECT_EQ(slurp(e.path()), slurp(b.out / rel)) << rel;
    ++files;
  }
  EXPECT_GE(files, 3u * 3u);
}

TEST(Commands, IngestVoxelizeTargetsProduceOutputs) {
  CommandOptions opt;
  opt.config = small_config(2);
  opt.out = scratch("stages");
  ASSERT_EQ(cmd_ingest(opt), 0);
  ASSERT_EQ(cmd_voxelize(opt), 0);
  ASSERT_EQ(cmd_targets(opt), 0);
  EXPECT_TRUE(fs::exists(opt.out / "dataset" / "velodyne" / "000000.bin"));
  EXPECT_TRUE(fs::exists(opt.out / "voxels" / "000001.fpvx"));
  EXPECT_TRUE(fs::exists(opt.out / "targets" / "000000.txt"));
  const VoxelGrid g = read_grid(opt.out / "voxels" / "000000.fpvx");
  EXPECT_EQ(g.dims, opt.config.voxel.dims());
}

}  // namespace
}  // namespace fastpoint::pipeline
