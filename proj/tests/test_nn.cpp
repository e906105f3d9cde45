// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "fastpoint/error.hpp"
#include "fastpoint/nn/ops.hpp"
#include "fastpoint/nn/optim.hpp"
#include "fastpoint/nn/parameters.hpp"
#include "fastpoint/nn/refinernet.hpp"
#include "fastpoint/nn/voxelrpn.hpp"

namespace fastpoint::nn {
namespace {

TEST(Tensor, ValueCountMustMatchShape) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), ShapeMismatch);
  const Tensor t({2, 3}, {0, 1, 2, 3, 4, 5});
  EXPECT_EQ(t.at({1, 2}), 5.0);
  EXPECT_THROW(t.item(), NotScalar);
}

TEST(Tensor, BackwardAccumulatesIntoLeaves) {
  Tensor a = Tensor::parameter({2}, {1, 2});
  const Tensor loss = sum(mul(a, a));
  backward(loss);
  EXPECT_EQ(a.grad()[0], 2.0);
  backward(loss);
  EXPECT_EQ(a.grad()[1], 8.0);
  a.zero_grad();
  EXPECT_EQ(a.grad()[1], 0.0);
}

TEST(Tensor, NoGradRecordsNothing) {
  const Tensor a = Tensor::parameter({1}, {3});
  NoGradGuard g;
  const Tensor b = scale(a, 2);
  EXPECT_FALSE(b.requires_grad());
  EXPECT_EQ(b.item(), 6.0);
}

TEST(Ops, ShapeErrors) {
  const Tensor a({2, 3}), b({3, 2});
  EXPECT_THROW(add(a, b), ShapeMismatch);
  EXPECT_THROW(reshape(a, {4}), ShapeMismatch);
  EXPECT_THROW(linear(a, Tensor({4, 2}), Tensor({4})), ShapeMismatch);
}

TEST(Ops, ConvSizeFormulas) {
  EXPECT_EQ(conv_out_size(800, 3, 2, 1), 400u);
  EXPECT_EQ(conv_out_size(20, 3, 2, 0), 9u);
  EXPECT_EQ(deconv_out_size(100, 2, 2, 0), 200u);
}

TEST(Ops, Conv2dMatchesHandSum) {
  // 1 channel 3x3 input, 2x2 all-ones kernel, stride 1: window sums.
  const Tensor x({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  const Tensor w({1, 1, 2, 2}, {1, 1, 1, 1});
  const Tensor y = conv2d(x, w, Tensor({1}, {0.5}), {});
  EXPECT_EQ(y.shape(), (Shape{1, 2, 2}));
  EXPECT_EQ(y.values()[0], 12.5);
  EXPECT_EQ(y.values()[3], 28.5);
}

TEST(Ops, Deconv2dScattersKernel) {
  const Tensor x({1, 1, 2}, {1, 2});
  const Tensor w({1, 1, 2, 2}, {1, 2, 3, 4});
  const Tensor y = deconv2d(x, w, Tensor(), {{2, 2}, {0, 0}});
  EXPECT_EQ(y.shape(), (Shape{1, 2, 4}));
  const std::vector<double> want{1, 2, 2, 4, 3, 4, 6, 8};
  EXPECT_EQ(std::vector<double>(y.values().begin(), y.values().end()), want);
}

TEST(Ops, SegmentMaxAndVoxelEncoderMasking) {
  const Tensor x({4, 1}, {1, 5, 2, -3});
  const std::vector<std::size_t> off{0, 2, 4};
  const Tensor m = segment_max(x, off);
  EXPECT_EQ(m.values()[0], 5.0);
  EXPECT_EQ(m.values()[1], 2.0);
  // Second voxel empty: zero output even with positive bias.
  const Tensor dense({2, 2, 1}, {1, 9, 9, 9});
  const std::vector<std::size_t> counts{1, 0};
  const Tensor y = voxel_encoder(dense, counts, Tensor({1, 1}, {2}), Tensor({1}, {1}));
  EXPECT_EQ(y.values()[0], 3.0);
  EXPECT_EQ(y.values()[1], 0.0);
}

TEST(BatchNorm, TrainNormalizesAndUpdatesRunningStats) {
  BatchNormStats st{{0.0}, {1.0}};
  const Tensor x({1, 4}, {1, 2, 3, 4});
  const Tensor y = batchnorm(x, Tensor({1}, {1}), Tensor({1}, {0}), st, NormMode::kTrain, 0.1, 0.0);
  double s = 0;
  for (double v : y.values()) s += v;
  EXPECT_NEAR(s, 0.0, 1e-12);
  EXPECT_NEAR(st.running_mean[0], 0.25, 1e-12);
  const Tensor e = batchnorm(x, Tensor({1}, {2}), Tensor({1}, {1}), st, NormMode::kEval, 0.1, 0.0);
  EXPECT_NEAR(e.values()[0], 2 * (1 - 0.25) / std::sqrt(st.running_var[0]) + 1, 1e-12);
}

TEST(ShapePlan, ReferenceConfigOnReferenceGrid) {
  const ShapePlan p = infer_shapes(NetConfig::reference(), {704, 800, 20});
  EXPECT_EQ(p.cls_map, (Shape{200, 176, 4}));
  EXPECT_EQ(p.reg_map, (Shape{200, 176, 28}));
  EXPECT_EQ(p.map_rows(), 200u);
  EXPECT_EQ(p.map_cols(), 176u);
}

TEST(ShapePlan, RejectsGridThatDoesNotFit) {
  NetConfig c = NetConfig::reference();
  EXPECT_THROW(infer_shapes(c, {8, 8, 2}), ConfigMismatch);
  c.blocks.pop_back();
  EXPECT_THROW(c.validate(), ConfigMismatch);
}

TEST(ShapePlan, ScaledWidthsStayPositive) {
  const NetConfig c = NetConfig::reference().scaled(1.0 / 1024);
  for (const auto& l : c.conv3d) EXPECT_GE(l.channels, 1u);
  EXPECT_NO_THROW(c.validate());
}

TEST(VoxelRpn, ForwardShapesAndGridCheck) {
  NetConfig c = NetConfig::reference().scaled(1.0 / 32);
  c.encoder_channels = 2;
  VoxelSpec vs;
  vs.range = {{0, 16}, {-8, 8}, {-3, 1}};
  vs.voxel_size = {0.25, 0.25, 0.2};
  VoxelRpn net(c, vs.dims(), 1);
  const VoxelGrid g = voxelize(std::vector<Point>{{3, 1, -1, 0.5}, {8, -2, 0, 0.2}}, vs, 0);
  const RpnOutput out = net.forward(g, NormMode::kEval);
  EXPECT_EQ(out.cls.shape(), net.plan().cls_map);
  EXPECT_EQ(out.reg.shape(), net.plan().reg_map);
  for (double p : out.cls.values()) {
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
  }
  VoxelSpec other = vs;
  other.voxel_size = {0.5, 0.5, 0.2};
  EXPECT_THROW(net.forward(voxelize({}, other, 0), NormMode::kEval), ConfigMismatch);
}

TEST(Parameters, CheckpointRoundTripAndErrors) {
  Parameters p;
  p.add("a.weight", {2, 2}, {1, 2, 3, 4}, ParamKind::kWeight);
  p.add("a.bias", {2}, {5, 6}, ParamKind::kNoDecay);
  p.add("bn.running_mean", {2}, {0.5, 0.25}, ParamKind::kBuffer);
  EXPECT_THROW(p.add("a.bias", {1}, {0}, ParamKind::kNoDecay), ConfigMismatch);
  const auto bytes = serialize(p);
  const Parameters q = deserialize(bytes);
  ASSERT_EQ(q.entries().size(), 3u);
  EXPECT_EQ(q.get("a.weight").values()[3], 4.0);
  EXPECT_EQ(q.entries()[2].kind, ParamKind::kBuffer);
  EXPECT_EQ(serialize(q), bytes);
  auto bad = bytes;
  bad.resize(bad.size() - 1);
  EXPECT_THROW(deserialize(bad), FormatError);
  EXPECT_THROW(load_checkpoint("/nonexistent/ckpt.fpck"), MissingCheckpoint);
  Parameters r;
  r.add("a.weight", {4}, std::vector<double>(4), ParamKind::kWeight);
  EXPECT_THROW(assign_from(r, q), ConfigMismatch);
}

TEST(Adam, SkipsFrozenPrefixesAndBuffers) {
  Parameters p;
  Tensor a = p.add("rpn.w", {1}, {1.0}, ParamKind::kWeight);
  Tensor b = p.add("refiner.w", {1}, {1.0}, ParamKind::kWeight);
  Tensor s = p.add("rpn.stat", {1}, {1.0}, ParamKind::kBuffer);
  a.grad_mut()[0] = 1.0;
  b.grad_mut()[0] = 1.0;
  s.grad_mut()[0] = 1.0;
  Adam opt({.lr = 0.1, .weight_decay = 0.0});
  opt.step(p, {"rpn."});
  EXPECT_EQ(a.values()[0], 1.0);
  EXPECT_EQ(s.values()[0], 1.0);
  // First Adam step moves by lr in the gradient sign.
  EXPECT_NEAR(b.values()[0], 0.9, 1e-6);
}

TEST(Sgd, PlainStep) {
  Parameters p;
  Tensor a = p.add("w", {2}, {1.0, 2.0}, ParamKind::kWeight);
  a.grad_mut()[0] = 2.0;
  a.grad_mut()[1] = -1.0;
  Sgd(0.5).step(p);
  EXPECT_EQ(a.values()[0], 0.0);
  EXPECT_EQ(a.values()[1], 2.5);
}

BoxFeature random_feature(std::size_t n, std::size_t ch, std::mt19937_64& rng) {
  std::normal_distribution<double> d;
  BoxFeature f;
  f.proposal = {10, 2, -1, 3.9, 1.6, 1.5, 0.4};
  f.channels = ch;
  for (std::size_t i = 0; i < n; ++i) {
    f.coords.push_back({d(rng), d(rng), d(rng)});
    for (std::size_t c = 0; c < ch; ++c) f.features.push_back(d(rng));
  }
  return f;
}

RefinerConfig tiny_refiner() {
  RefinerConfig c;
  c.feature_channels = 4;
  c.coord_channels = 3;
  c.pointnet = {5, 6};
  c.head = {4};
  return c;
}

TEST(RefinerNet, PointOrderDoesNotMatter) {
  std::mt19937_64 rng(8);
  RefinerNet net(tiny_refiner(), 3);
  BoxFeature f = random_feature(9, 4, rng);
  const Tensor a = net.forward(std::vector<BoxFeature>{f});
  BoxFeature g = f;
  std::vector<std::size_t> perm(9);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  for (std::size_t i = 0; i < 9; ++i) {
    g.coords[i] = f.coords[perm[i]];
    for (std::size_t c = 0; c < 4; ++c) g.features[i * 4 + c] = f.features[perm[i] * 4 + c];
  }
  const Tensor b = net.forward(std::vector<BoxFeature>{g});
  ASSERT_EQ(a.shape(), (Shape{1, 24}));
  for (std::size_t k = 0; k < 24; ++k) EXPECT_NEAR(a.values()[k], b.values()[k], 1e-12);
}

TEST(RefinerNet, EmptyProposalThrows) {
  RefinerNet net(tiny_refiner(), 3);
  BoxFeature empty;
  empty.channels = 4;
  EXPECT_THROW(net.forward(std::vector<BoxFeature>{empty}), EmptyProposal);
}

TEST(RefinerNet, AttentionModesShareOutputShape) {
  std::mt19937_64 rng(9);
  const std::vector<BoxFeature> boxes{random_feature(3, 4, rng), random_feature(5, 4, rng)};
  for (auto mode : {AttentionMode::kChannel, AttentionMode::kScalar, AttentionMode::kNone}) {
    RefinerConfig c = tiny_refiner();
    c.attention = mode;
    RefinerNet net(c, 1);
    EXPECT_EQ(net.forward(boxes).shape(), (Shape{2, 24}));
  }
}

}  // namespace
}  // namespace fastpoint::nn
